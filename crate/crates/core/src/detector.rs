//! Trusted heterodyne detector model, key-map geometry and the noisy POVM density.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constellation::{Constellation, Modulation};
use crate::error::{domain, Result};
use crate::linalg::C64;
use crate::special::ln_factorial;

/// Trusted detector with efficiency `η_d`, electronic noise `ν_el` (SNU) and a
/// radial detection range `M` (NU).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub eta_d: f64,
    pub nu_el: f64,
    pub range_m: f64,
}

impl DetectorModel {
    pub fn new(eta_d: f64, nu_el: f64) -> Result<Self> {
        Self::with_range(eta_d, nu_el, f64::INFINITY)
    }

    pub fn with_range(eta_d: f64, nu_el: f64, range_m: f64) -> Result<Self> {
        if !(eta_d > 0.0 && eta_d <= 1.0) {
            return Err(domain(format!("detector efficiency must lie in (0, 1], got {eta_d}")));
        }
        if !(nu_el >= 0.0) || !nu_el.is_finite() {
            return Err(domain(format!("electronic noise must be nonnegative, got {nu_el}")));
        }
        if !(range_m > 0.0) {
            return Err(domain(format!("detection range must be positive, got {range_m}")));
        }
        Ok(Self { eta_d, nu_el, range_m })
    }

    pub fn ideal() -> Self {
        Self { eta_d: 1.0, nu_el: 0.0, range_m: f64::INFINITY }
    }

    /// Thermal occupation of the electronic-noise mode, `ν_el / [2(1-η_d)]`.
    /// Infinite when a lossless detector carries electronic noise.
    pub fn n_bar_s(&self) -> f64 {
        if self.nu_el == 0.0 {
            0.0
        } else if self.eta_d >= 1.0 {
            f64::INFINITY
        } else {
            self.nu_el / (2.0 * (1.0 - self.eta_d))
        }
    }

    /// Effective occupation entering the POVM density, `(1-η_d+ν_el)/η_d`.
    pub fn n_bar_d(&self) -> f64 {
        (1.0 - self.eta_d + self.nu_el) / self.eta_d
    }

    pub fn is_ideal(&self) -> bool {
        self.n_bar_d() == 0.0
    }

    pub fn canonical(&self) -> String {
        format!("eta_d={:.17e}|nu_el={:.17e}|M={:.17e}", self.eta_d, self.nu_el, self.range_m)
    }
}

/// Rectangle `[x_lo, x_hi] × [y_lo, y_hi]`; limits may be infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_lo && x <= self.x_hi && y >= self.y_lo && y <= self.y_hi
    }
}

/// Rectangular key map with a post-selection band of half-width `Δ` around
/// both axes. Regions are indexed `z = row * side + col`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyMapGeometry {
    pub modulation: Modulation,
    pub delta: f64,
    pub alpha0: f64,
    pub range_m: f64,
}

impl KeyMapGeometry {
    pub fn new(modulation: Modulation, alpha0: f64, delta: f64, range_m: f64) -> Result<Self> {
        if !(delta >= 0.0) {
            return Err(domain(format!("post-selection width must be nonnegative, got {delta}")));
        }
        if modulation == Modulation::Qam16 && !(delta < 2.0 * alpha0) {
            return Err(domain(format!("post-selection width {delta} must stay below 2α₀ = {}", 2.0 * alpha0)));
        }
        if !(range_m > 0.0) {
            return Err(domain("detection range must be positive"));
        }
        Ok(Self { modulation, delta, alpha0, range_m })
    }

    /// Geometry for a constellation sent through transmittance `eta_t` and
    /// detected with efficiency `eta_d`; `delta0` is the channel-independent
    /// band width so that `Δ = Δ₀ √(η_t η_d)`.
    pub fn for_channel(c: &Constellation, eta_t: f64, d: &DetectorModel, delta0: f64) -> Result<Self> {
        let scale = (eta_t * d.eta_d).sqrt();
        Self::new(c.modulation, scale * c.half_spacing, delta0 * scale, d.range_m)
    }

    pub fn side(&self) -> usize {
        self.modulation.levels().len()
    }

    pub fn num_regions(&self) -> usize {
        self.side() * self.side()
    }

    /// Per-axis intervals in column (or row) order.
    pub fn intervals(&self) -> Vec<(f64, f64)> {
        let (d, b) = (self.delta, 2.0 * self.alpha0);
        match self.modulation {
            Modulation::Qam16 => vec![(b, f64::INFINITY), (d, b), (-b, -d), (f64::NEG_INFINITY, -b)],
            Modulation::Qpsk => vec![(d, f64::INFINITY), (f64::NEG_INFINITY, -d)],
        }
    }

    pub fn region(&self, z: usize) -> Rect {
        let iv = self.intervals();
        let s = self.side();
        let (x_lo, x_hi) = iv[z % s];
        let (y_lo, y_hi) = iv[z / s];
        Rect { x_lo, x_hi, y_lo, y_hi }
    }

    /// Finite axis breakpoints of all region boundaries.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v = vec![-self.delta, self.delta];
        if self.modulation == Modulation::Qam16 {
            v.push(-2.0 * self.alpha0);
            v.push(2.0 * self.alpha0);
        }
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
        v
    }

    pub fn canonical(&self) -> String {
        format!("{:?}|delta={:.17e}|alpha0={:.17e}|M={:.17e}", self.modulation, self.delta, self.alpha0, self.range_m)
    }
}

fn axis_index(v: f64, g: &KeyMapGeometry) -> Option<usize> {
    if v.abs() < g.delta {
        return None;
    }
    let b = 2.0 * g.alpha0;
    Some(match g.modulation {
        Modulation::Qam16 => {
            if v >= b {
                0
            } else if v >= g.delta {
                1
            } else if v > -b {
                2
            } else {
                3
            }
        }
        Modulation::Qpsk => {
            if v >= g.delta {
                0
            } else {
                1
            }
        }
    })
}

/// Region index of a measurement outcome, or `None` for the discard symbol ⊥.
pub fn key_map(y: C64, g: &KeyMapGeometry) -> Option<usize> {
    if y.norm() > g.range_m {
        return None;
    }
    let col = axis_index(y.re, g)?;
    let row = axis_index(y.im, g)?;
    Some(row * g.side() + col)
}

/// `<m|G_{ζ-√η_d β}|n>`.
pub fn gzeta_element(m: usize, n: usize, zeta: C64, beta: C64, d: &DetectorModel) -> Result<C64> {
    if m > n {
        return gzeta_element(n, m, zeta, beta, d).map(|v| v.conj());
    }
    if d.n_bar_d() == 0.0 {
        return Ok(gzeta_coherent(m, n, zeta, beta, d.eta_d));
    }
    let mut kernel = GzetaKernel::new(n, d);
    let shifted = zeta - beta * d.eta_d.sqrt();
    let mut out = vec![C64::new(0.0, 0.0); kernel.len()];
    kernel.evaluate(shifted, &mut out);
    Ok(out[kernel.index(m, n)])
}

/// Evaluates all upper-triangle elements `<m|G_{ζ'}|n>` (`m ≤ n ≤ N_c`) at a point.
#[derive(Clone, Debug)]
pub struct GzetaKernel {
    cutoff: usize,
    eta_d: f64,
    nbar: f64,
    /// `√(m!/n!) / (1+n̄)^{n+1}` per packed index.
    coeff: Vec<f64>,
    powers: Vec<C64>,
    ell: Vec<f64>,
}

impl GzetaKernel {
    pub fn new(cutoff: usize, d: &DetectorModel) -> Self {
        let nbar = d.n_bar_d();
        let dim = cutoff + 1;
        let mut coeff = vec![0.0; dim * (dim + 1) / 2];
        let mut idx = 0;
        for diag in 0..dim {
            for m in 0..(dim - diag) {
                let n = m + diag;
                let lf = 0.5 * (ln_factorial(m) - ln_factorial(n)) - (n as f64 + 1.0) * (1.0 + nbar).ln();
                coeff[idx] = lf.exp();
                idx += 1;
            }
        }
        Self { cutoff, eta_d: d.eta_d, nbar, coeff, powers: vec![C64::new(0.0, 0.0); dim], ell: vec![0.0; dim] }
    }

    pub fn len(&self) -> usize {
        let d = self.cutoff + 1;
        d * (d + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Packed index of `(m, n)` with `m ≤ n`, stored by diagonal offset `n - m`.
    pub fn index(&self, m: usize, n: usize) -> usize {
        let dim = self.cutoff + 1;
        let diag = n - m;
        // elements before diagonal `diag`: Σ_{t<diag} (dim - t)
        diag * dim - diag * (diag.saturating_sub(1)) / 2 + m
    }

    /// Fills `out` (packed) for offset `shifted = ζ - √η_d β`.
    pub fn evaluate(&mut self, shifted: C64, out: &mut [C64]) {
        let dim = self.cutoff + 1;
        let r2 = shifted.norm_sqr();
        let x = r2 / self.eta_d;
        let nbar = self.nbar;
        let pref = (-r2 / (self.eta_d * (1.0 + nbar))).exp() / (self.eta_d * PI);
        let c = shifted.conj() / self.eta_d.sqrt();
        self.powers[0] = C64::new(1.0, 0.0);
        for k in 1..dim {
            self.powers[k] = self.powers[k - 1] * c;
        }
        let mut idx = 0;
        for diag in 0..dim {
            let a = diag as f64;
            let len = dim - diag;
            // ℓ_m = n̄^m L_m^{(a)}(-x/(n̄(1+n̄))), scaled recurrence valid at n̄ = 0
            self.ell[0] = 1.0;
            if len > 1 {
                self.ell[1] = nbar * (1.0 + a) + x / (1.0 + nbar);
            }
            for k in 1..len.saturating_sub(1) {
                let kf = k as f64;
                self.ell[k + 1] = (((2.0 * kf + 1.0 + a) * nbar + x / (1.0 + nbar)) * self.ell[k]
                    - (kf + a) * nbar * nbar * self.ell[k - 1])
                    / (kf + 1.0);
            }
            let p = self.powers[diag] * pref;
            for m in 0..len {
                out[idx] = p * (self.ell[m] * self.coeff[idx]);
                idx += 1;
            }
        }
    }
}

/// Coherent-projector form `(1/(η_d π)) <m|ζ''><ζ''|n>`, `ζ'' = (ζ - √η_d β)/√η_d`,
/// valid when `n̄_d = 0`.
pub fn gzeta_coherent(m: usize, n: usize, zeta: C64, beta: C64, eta_d: f64) -> C64 {
    let g = (zeta - beta * eta_d.sqrt()) / eta_d.sqrt();
    crate::fock::coherent_outer_element(m, n, g) / (eta_d * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::build_16qam;
    use crate::fock::{displacement_elements, thermal_diagonal, FockSpace};
    use crate::linalg;

    fn qam_geometry(delta: f64) -> KeyMapGeometry {
        KeyMapGeometry::new(Modulation::Qam16, 1.0, delta, f64::INFINITY).unwrap()
    }

    #[test]
    fn occupations() {
        let d = DetectorModel::new(0.7, 0.08).unwrap();
        assert!((d.n_bar_d() - 0.38 / 0.7).abs() < 1e-12);
        assert!((d.n_bar_s() - 0.08 / 0.6).abs() < 1e-12);
        assert_eq!(DetectorModel::ideal().n_bar_d(), 0.0);
        assert!(DetectorModel::new(0.0, 0.1).is_err());
        assert!(DetectorModel::new(0.5, -0.1).is_err());
    }

    #[test]
    fn key_map_examples() {
        let g = qam_geometry(0.1);
        assert_eq!(key_map(C64::new(3.0, 3.0), &g), Some(0));
        assert_eq!(key_map(C64::new(0.0, 0.0), &g), None);
        assert_eq!(key_map(C64::new(-3.0, -3.0), &g), Some(15));
        assert_eq!(key_map(C64::new(0.5, 3.0), &g), Some(1));
        assert_eq!(key_map(C64::new(0.05, 3.0), &g), None);
        let gm = KeyMapGeometry::new(Modulation::Qam16, 1.0, 0.1, 2.0).unwrap();
        assert_eq!(key_map(C64::new(3.0, 3.0), &gm), None);
    }

    #[test]
    fn key_map_membership_grid() {
        let g = qam_geometry(0.3);
        let mut mismatches = 0;
        for i in 0..100 {
            for j in 0..100 {
                let y = C64::new(-5.0 + 0.1 * i as f64 + 0.013, -5.0 + 0.1 * j as f64 + 0.007);
                if let Some(z) = key_map(y, &g) {
                    if !g.region(z).contains(y.re, y.im) {
                        mismatches += 1;
                    }
                } else if y.re.abs() >= g.delta && y.im.abs() >= g.delta {
                    mismatches += 1;
                }
            }
        }
        assert_eq!(mismatches, 0);
    }

    #[test]
    fn geometry_rejects_wide_band() {
        assert!(KeyMapGeometry::new(Modulation::Qam16, 0.5, 1.0, f64::INFINITY).is_err());
        let c = build_16qam(0.2, 2.0).unwrap();
        let g = KeyMapGeometry::for_channel(&c, 0.5, &DetectorModel::new(0.7, 0.0).unwrap(), 0.35).unwrap();
        assert!((g.delta - 0.35 * 0.35f64.sqrt()).abs() < 1e-15);
        assert!((g.alpha0 - 0.35f64.sqrt() * c.half_spacing).abs() < 1e-15);
    }

    #[test]
    fn ideal_vacuum_element() {
        let d = DetectorModel::ideal();
        let zeta = C64::new(0.4, -0.2);
        let beta = C64::new(0.1, 0.3);
        let v = gzeta_element(0, 0, zeta, beta, &d).unwrap();
        let expect = (-(zeta - beta).norm_sqr()).exp() / PI;
        assert!((v.re - expect).abs() < 1e-15 && v.im.abs() < 1e-15);
        for m in 0..5 {
            for n in m..5 {
                let a = gzeta_element(m, n, zeta, beta, &d).unwrap();
                let b = gzeta_coherent(m, n, zeta, beta, 1.0);
                assert!((a - b).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_offset_kills_off_diagonal() {
        let d = DetectorModel::new(0.7, 0.08).unwrap();
        let beta = C64::new(0.2, 0.1);
        let v = gzeta_element(0, 1, beta * 0.7f64.sqrt(), beta, &d).unwrap();
        assert!(v.norm() < 1e-16);
    }

    #[test]
    fn matches_displaced_thermal_oracle() {
        let d = DetectorModel::new(0.7, 0.08).unwrap();
        let space = FockSpace::new(30).unwrap();
        let zeta = C64::new(0.3, 0.1);
        let beta = C64::new(0.2, 0.0);
        let delta = zeta / d.eta_d.sqrt() - beta;
        let disp = displacement_elements(space, delta);
        let th = linalg::diagonal(&thermal_diagonal(space, d.n_bar_d()));
        let rho = linalg::sandwich(&disp, &th);
        let oracle = rho[(1, 2)] / (d.eta_d * PI);
        let v = gzeta_element(1, 2, zeta, beta, &d).unwrap();
        assert!((v - oracle).norm() < 1e-8, "{v} vs {oracle}");
    }

    #[test]
    fn kernel_index_is_dense() {
        let k = GzetaKernel::new(6, &DetectorModel::ideal());
        let mut seen = vec![false; k.len()];
        for m in 0..7 {
            for n in m..7 {
                let i = k.index(m, n);
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }
}
