//! Parameter estimation from heterodyne records: Gaussian-channel `(T, ξ)` with
//! worst-case corrections, and assumption-free displaced photon-number moments.
//!
//! Records store the sent index `k` and the two measured quadratures `(q, p)` in
//! SNU, so that `Y = (q + ip)/√2` is the complex outcome in NU.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::constellation::Constellation;
use crate::detector::DetectorModel;
use crate::error::{domain, Error, Result};
use crate::special::erf_inv;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub k: u32,
    pub q: f64,
    pub p: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleSet {
    pub num_states: usize,
    pub records: Vec<Sample>,
}

const SAMPLE_MAGIC: &[u8; 4] = b"CVQS";
const SAMPLE_VERSION: u32 = 1;

impl SampleSet {
    pub fn new(num_states: usize, records: Vec<Sample>) -> Result<Self> {
        if let Some(bad) = records.iter().find(|r| r.k as usize >= num_states) {
            return Err(domain(format!("record references state {} of {num_states}", bad.k)));
        }
        Ok(Self { num_states, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `C_k`
    pub fn counts(&self) -> Vec<u64> {
        let mut c = vec![0u64; self.num_states];
        for r in &self.records {
            c[r.k as usize] += 1;
        }
        c
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> SampleSet {
        SampleSet { num_states: self.num_states, records: self.records[range].to_vec() }
    }

    /// CSV with header `k,q,p`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, num_states: usize) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path)?;
        let records = rd.deserialize().collect::<std::result::Result<Vec<Sample>, _>>()?;
        Self::new(num_states, records)
    }

    /// Little-endian binary: `"CVQS"`, version `u32`, state count `u32`, record
    /// count `u64`, then per record `k: u32, q: f64, p: f64`.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_binary_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_binary_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(SAMPLE_MAGIC)?;
        w.write_u32::<LittleEndian>(SAMPLE_VERSION)?;
        w.write_u32::<LittleEndian>(self.num_states as u32)?;
        w.write_u64::<LittleEndian>(self.records.len() as u64)?;
        for r in &self.records {
            w.write_u32::<LittleEndian>(r.k)?;
            w.write_f64::<LittleEndian>(r.q)?;
            w.write_f64::<LittleEndian>(r.p)?;
        }
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        Self::read_binary_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn read_binary_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SAMPLE_MAGIC {
            return Err(Error::Estimation("not a sample file".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != SAMPLE_VERSION {
            return Err(Error::Estimation(format!("unsupported sample file version {version}")));
        }
        let num_states = r.read_u32::<LittleEndian>()? as usize;
        let n = r.read_u64::<LittleEndian>()? as usize;
        let mut records = Vec::with_capacity(n.min(1 << 26));
        for _ in 0..n {
            let k = r.read_u32::<LittleEndian>()?;
            let q = r.read_f64::<LittleEndian>()?;
            let p = r.read_f64::<LittleEndian>()?;
            records.push(Sample { k, q, p });
        }
        Self::new(num_states, records)
    }

    /// Loads a `.csv` or binary file by extension.
    pub fn load(path: &Path, num_states: usize) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Self::read_csv(path, num_states),
            _ => Self::read_binary(path),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => self.write_csv(path),
            _ => self.write_binary(path),
        }
    }
}

/// Transmittance and excess noise under the Gaussian channel model
/// `y = √(0.5 η_d T) x + δ`.
///
/// `x` are the sent quadratures `2 Re α_k`, `2 Im α_k` (SNU); the cross moment is
/// normalised by `V_A` per quadrature and the two estimates of `√(0.5η_d T)` are
/// averaged. `V_B` is the mean of the two measured quadrature variances.
pub fn estimate_t_xi(s: &SampleSet, c: &Constellation, d: &DetectorModel) -> Result<(f64, f64)> {
    if s.len() < 2 {
        return Err(Error::Estimation("at least two records are needed".into()));
    }
    if s.num_states != c.len() {
        return Err(domain("sample set and constellation disagree on the number of states"));
    }
    let v_a = c.modulation_variance;
    if !(v_a > 0.0) {
        return Err(Error::Estimation("modulation variance must be positive".into()));
    }
    let m = s.len() as f64;
    let (mut sxq, mut sxp, mut sxx_q, mut sxx_p) = (0.0, 0.0, 0.0, 0.0);
    let (mut sq, mut sp, mut sqq, mut spp) = (0.0, 0.0, 0.0, 0.0);
    for r in &s.records {
        let a = c.points[r.k as usize].0;
        let (xq, xp) = (2.0 * a.re, 2.0 * a.im);
        sxq += xq * r.q;
        sxp += xp * r.p;
        sxx_q += xq * xq;
        sxx_p += xp * xp;
        sq += r.q;
        sp += r.p;
        sqq += r.q * r.q;
        spp += r.p * r.p;
    }
    if sxx_q / m < 1e-12 * v_a || sxx_p / m < 1e-12 * v_a {
        return Err(Error::Estimation("sent symbols have zero variance".into()));
    }
    let gain = 0.5 * (sxq / m + sxp / m) / v_a;
    let t = gain * gain / (0.5 * d.eta_d);
    let var = |s1: f64, s2: f64| (s2 - s1 * s1 / m) / (m - 1.0);
    let v_b = 0.5 * (var(sq, sqq) + var(sp, spp));
    let xi = (v_b - 0.5 * d.eta_d * t * v_a - d.nu_el - 1.0) / (0.5 * d.eta_d * t);
    Ok((t, xi))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseParams {
    pub t: f64,
    pub xi: f64,
    pub t_wc: f64,
    pub xi_wc: f64,
    pub w_pe: f64,
}

/// `w = √2 erf⁻¹(1 − ε_pe)`
pub fn confidence_factor(eps_pe: f64) -> Result<f64> {
    if !(eps_pe > 0.0 && eps_pe < 1.0) {
        return Err(domain(format!("ε_pe must lie in (0, 1), got {eps_pe}")));
    }
    Ok(std::f64::consts::SQRT_2 * erf_inv(1.0 - eps_pe))
}

/// Worst-case transmittance and excess noise at confidence `1 − ε_pe`:
///
/// `T_wc = T − w (2T/√(2k_T)) √((ξ + (2+ν_el)/(η_d T)) / V_A)`,
/// `ξ_wc = (T/T_wc) ξ + w √(1/k_T) (η_d T ξ + 2 + ν_el)/(η_d T_wc)`.
pub fn worst_case(t: f64, xi: f64, eps_pe: f64, d: &DetectorModel, v_a: f64, k_t: f64) -> Result<WorstCaseParams> {
    let w = confidence_factor(eps_pe)?;
    if !(t > 0.0) || !(v_a > 0.0) || !(k_t >= 1.0) {
        return Err(domain(format!("worst case needs T > 0, V_A > 0, k_T ≥ 1 (got {t}, {v_a}, {k_t})")));
    }
    let nu = d.nu_el;
    let eta = d.eta_d;
    let t_wc = t - w * 2.0 * t / (2.0 * k_t).sqrt() * ((xi + (2.0 + nu) / (eta * t)) / v_a).sqrt();
    if !(t_wc > 0.0) {
        return Err(Error::Estimation(format!("worst-case transmittance {t_wc:.3e} is not positive")));
    }
    let xi_wc = t / t_wc * xi + w * (1.0 / k_t).sqrt() * (eta * t * xi + 2.0 + nu) / (eta * t_wc);
    Ok(WorstCaseParams { t, xi, t_wc, xi_wc, w_pe: w })
}

/// Reconstructed `<n̂_{β_k}>`, `<n̂²_{β_k}>` for one state with standard errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub count: u64,
    pub n: f64,
    pub n2: f64,
    pub se_n: f64,
    pub se_n2: f64,
    /// Noisy moments before detector inversion.
    pub noisy_n: f64,
    pub noisy_n2: f64,
}

/// Per-state displaced moments: centre on the empirical mean, form the noisy
/// moments `E[u − 1]` and `E[u² − 3u + 1]` with `u = ½(q̃² + p̃²)`, then undo the
/// detector (`η_d`, `ν_el`).
pub fn displaced_moments_from_samples(s: &SampleSet, d: &DetectorModel) -> Result<Vec<MomentEstimate>> {
    let nk = s.num_states;
    let mut sums = vec![[0.0f64; 3]; nk];
    let mut counts = vec![0u64; nk];
    for r in &s.records {
        let e = &mut sums[r.k as usize];
        e[0] += r.q;
        e[1] += r.p;
        counts[r.k as usize] += 1;
    }
    let means: Vec<(f64, f64)> = (0..nk)
        .map(|k| {
            let c = counts[k].max(1) as f64;
            (sums[k][0] / c, sums[k][1] / c)
        })
        .collect();
    // Σ u, Σ u², Σ v, Σ v² with v = u² − 3u + 1
    let mut acc = vec![[0.0f64; 4]; nk];
    for r in &s.records {
        let (mq, mp) = means[r.k as usize];
        let (dq, dp) = (r.q - mq, r.p - mp);
        let u = 0.5 * (dq * dq + dp * dp);
        let v = u * u - 3.0 * u + 1.0;
        let a = &mut acc[r.k as usize];
        a[0] += u;
        a[1] += u * u;
        a[2] += v;
        a[3] += v * v;
    }
    let eta = d.eta_d;
    let nu = d.nu_el;
    let mut out = Vec::with_capacity(nk);
    for k in 0..nk {
        let c = counts[k];
        if c < 2 {
            return Err(Error::Estimation(format!("state {k} has {c} records, at least 2 are needed")));
        }
        let cf = c as f64;
        let mean_u = acc[k][0] / cf;
        let mean_v = acc[k][2] / cf;
        let var_u = (acc[k][1] / cf - mean_u * mean_u).max(0.0);
        let var_v = (acc[k][3] / cf - mean_v * mean_v).max(0.0);
        if mean_u < 1.0 - 10.0 / cf.sqrt() {
            return Err(Error::DataInconsistency(format!(
                "state {k}: centred outcome energy {mean_u:.3e} lies below the vacuum level"
            )));
        }
        // Bessel-type correction for centring on the empirical mean.
        let noisy_n = mean_u * cf / (cf - 1.0) - 1.0;
        let noisy_n2 = mean_v;
        let n = (noisy_n - nu) / eta;
        let n2 = (noisy_n2 - 2.0 * nu * nu - nu - (4.0 * nu + 1.0 - eta) * (noisy_n - nu)) / (eta * eta);
        let se_n = (var_u / cf).sqrt() / eta;
        let se_n2 = ((var_v / cf).sqrt() + (4.0 * nu + 1.0 - eta).abs() * (var_u / cf).sqrt()) / (eta * eta);
        out.push(MomentEstimate { count: c, n, n2, se_n, se_n2, noisy_n, noisy_n2 });
    }
    Ok(out)
}
