//! Noisy region operators `∫_{A_z} G_ζ d²ζ` in the displaced photon-number bases.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::detector::{DetectorModel, GzetaKernel, KeyMapGeometry, Rect};
use crate::error::{domain, Error, Result};
use crate::fock::{FockSpace, TruncatedOperator};
use crate::linalg::{self, CMat, C64, ZERO};
use crate::special::gauss_legendre;

/// Tensor Gauss–Legendre panel rule with refinement by panel halving.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureRule {
    pub nodes: usize,
    pub panel_width: f64,
    pub tol: f64,
    pub max_halvings: usize,
    /// Truncation radius for infinite limits; `None` picks the default.
    pub r_int: Option<f64>,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self { nodes: 16, panel_width: 1.0, tol: 1e-9, max_halvings: 3, r_int: None }
    }
}

/// `max(8, √η_d max|β| + 7)`.
pub fn default_r_int(eta_d: f64, max_beta: f64) -> f64 {
    (eta_d.sqrt() * max_beta + 7.0).max(8.0)
}

fn axis_nodes(lo: f64, hi: f64, breaks: &[f64], h: f64, gl: &(Vec<f64>, Vec<f64>)) -> Vec<(f64, f64)> {
    let mut cuts = vec![lo];
    cuts.extend(breaks.iter().copied().filter(|&b| b > lo && b < hi));
    cuts.push(hi);
    let mut out = Vec::new();
    for seg in cuts.windows(2) {
        let len = seg[1] - seg[0];
        if len <= 0.0 {
            continue;
        }
        let panels = (len / h).ceil().max(1.0) as usize;
        let pw = len / panels as f64;
        for p in 0..panels {
            let a = seg[0] + p as f64 * pw;
            for (x, w) in gl.0.iter().zip(&gl.1) {
                out.push((a + 0.5 * pw * (x + 1.0), 0.5 * pw * w));
            }
        }
    }
    out
}

/// Integrates the packed POVM density over a node grid, routing every node to
/// one accumulator (or none) by `classify`.
fn integrate_packed(
    center: C64,
    kernel: &GzetaKernel,
    xs: &[(f64, f64)],
    ys: &[(f64, f64)],
    classify: &(dyn Fn(f64, f64) -> Option<usize> + Sync),
    targets: usize,
) -> Vec<Vec<C64>> {
    let len = kernel.len();
    let mut acc = vec![vec![ZERO; len]; targets];
    let mut kernel = kernel.clone();
    let mut vals = vec![ZERO; len];
    for &(y, wy) in ys {
        for &(x, wx) in xs {
            let Some(t) = classify(x, y) else { continue };
            kernel.evaluate(C64::new(x, y) - center, &mut vals);
            let w = wx * wy;
            for (a, v) in acc[t].iter_mut().zip(&vals) {
                *a += *v * w;
            }
        }
    }
    acc
}

fn unpack(kernel: &GzetaKernel, dim: usize, packed: &[C64]) -> CMat {
    let mut m = linalg::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let v = packed[kernel.index(i, j)];
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
    for i in 0..dim {
        m[(i, i)] = C64::new(m[(i, i)].re, 0.0);
    }
    m
}

fn max_packed_diff(a: &[Vec<C64>], b: &[Vec<C64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).norm()))
        .fold(0.0, f64::max)
}

/// Adaptive driver: halves the panel width until successive estimates agree.
fn integrate_adaptive(
    center: C64,
    kernel: &GzetaKernel,
    window: (f64, f64, f64, f64),
    breaks: &[f64],
    classify: &(dyn Fn(f64, f64) -> Option<usize> + Sync),
    targets: usize,
    rule: &QuadratureRule,
) -> (Vec<Vec<C64>>, f64) {
    let gl = gauss_legendre(rule.nodes);
    let run = |h: f64| {
        let xs = axis_nodes(window.0, window.1, breaks, h, &gl);
        let ys = axis_nodes(window.2, window.3, breaks, h, &gl);
        integrate_packed(center, kernel, &xs, &ys, classify, targets)
    };
    let mut h = rule.panel_width;
    let mut prev = run(h);
    let mut err = f64::INFINITY;
    for _ in 0..rule.max_halvings.max(1) {
        h *= 0.5;
        let next = run(h);
        err = max_packed_diff(&prev, &next);
        prev = next;
        if err < rule.tol {
            break;
        }
    }
    (prev, err)
}

fn clip(v: f64, r: f64) -> f64 {
    v.clamp(-r, r)
}

/// Single region operator `∫_{A_z} <m|G_{ζ-√η_d β}|n> d²ζ` with infinite limits
/// truncated at `R_int` (and at the detection range, as a square window).
pub fn region_operator(
    z: usize,
    beta: C64,
    d: &DetectorModel,
    g: &KeyMapGeometry,
    space: FockSpace,
    rule: &QuadratureRule,
) -> Result<RegionOperator> {
    if z >= g.num_regions() {
        return Err(domain(format!("region index {z} out of range")));
    }
    let r = rule.r_int.unwrap_or_else(|| default_r_int(d.eta_d, beta.norm())).min(g.range_m);
    let rect = g.region(z);
    let window = (clip(rect.x_lo, r), clip(rect.x_hi, r), clip(rect.y_lo, r), clip(rect.y_hi, r));
    let kernel = GzetaKernel::new(space.cutoff(), d);
    let classify = move |x: f64, y: f64| if rect.contains(x, y) { Some(0) } else { None };
    let center = beta * d.eta_d.sqrt();
    let (packed, err) = integrate_adaptive(center, &kernel, window, &g.breakpoints(), &classify, 1, rule);
    let op = unpack(&kernel, space.dim(), &packed[0]);
    Ok(RegionOperator { op: TruncatedOperator::new(space, op)?, est_error: err, converged: err < rule.tol })
}

#[derive(Clone, Debug)]
pub struct RegionOperator {
    pub op: TruncatedOperator,
    pub est_error: f64,
    pub converged: bool,
}

/// All region operators for every sent state, each in its own displaced basis
/// `{|n_{β_k}>}`, plus the operator of the discard band.
#[derive(Clone, Debug)]
pub struct RegionOperatorSet {
    pub space: FockSpace,
    pub geometry: KeyMapGeometry,
    pub detector: DetectorModel,
    pub betas: Vec<C64>,
    pub r_int: f64,
    /// `ops[k][z]`
    pub ops: Vec<Vec<CMat>>,
    /// Axis band `|x| < Δ or |y| < Δ` per `k`.
    pub discard: Vec<CMat>,
    pub est_error: f64,
}

impl RegionOperatorSet {
    pub fn num_states(&self) -> usize {
        self.ops.len()
    }

    pub fn num_regions(&self) -> usize {
        self.geometry.num_regions()
    }

    /// `Σ_z R^z_k`
    pub fn pass_operator(&self, k: usize) -> CMat {
        let dim = self.space.dim();
        let mut s = linalg::zeros(dim, dim);
        for r in &self.ops[k] {
            linalg::axpy(&mut s, C64::new(1.0, 0.0), r);
        }
        s
    }

    /// Most negative eigenvalue across all operators (0 if all PSD).
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        for row in &self.ops {
            for r in row {
                worst = worst.min(linalg::min_eigenvalue(r)?);
            }
        }
        Ok(worst)
    }

    pub fn cache_key(&self) -> String {
        cache_key(&self.geometry, &self.detector, &self.betas, self.space, self.r_int)
    }
}

fn cache_key(g: &KeyMapGeometry, d: &DetectorModel, betas: &[C64], space: FockSpace, r_int: f64) -> String {
    let mut h = Sha256::new();
    h.update(g.canonical().as_bytes());
    h.update(d.canonical().as_bytes());
    for b in betas {
        h.update(format!("{:.17e},{:.17e};", b.re, b.im).as_bytes());
    }
    h.update(format!("Nc={}|R={:.17e}", space.cutoff(), r_int).as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Builds every `[R^z]'` for every received amplitude `β_k` in parallel.
pub fn region_operator_set(
    betas: &[C64],
    d: &DetectorModel,
    g: &KeyMapGeometry,
    space: FockSpace,
    rule: &QuadratureRule,
) -> Result<RegionOperatorSet> {
    let max_beta = betas.iter().map(|b| b.norm()).fold(0.0, f64::max);
    let r = rule.r_int.unwrap_or_else(|| default_r_int(d.eta_d, max_beta)).min(g.range_m);
    let nz = g.num_regions();
    let kernel = GzetaKernel::new(space.cutoff(), d);
    let breaks = g.breakpoints();
    let geom = g.clone();
    let classify = move |x: f64, y: f64| match crate::detector::key_map(C64::new(x, y), &KeyMapGeometry { range_m: f64::INFINITY, ..geom.clone() }) {
        Some(z) => Some(z),
        None => Some(nz),
    };
    let results: Vec<(Vec<CMat>, CMat, f64)> = betas
        .par_iter()
        .map(|&beta| {
            let center = beta * d.eta_d.sqrt();
            let (packed, err) = integrate_adaptive(center, &kernel, (-r, r, -r, r), &breaks, &classify, nz + 1, rule);
            let mut mats: Vec<CMat> = packed.iter().map(|p| unpack(&kernel, space.dim(), p)).collect();
            let discard = mats.pop().expect("discard accumulator");
            (mats, discard, err)
        })
        .collect();
    let mut ops = Vec::with_capacity(betas.len());
    let mut discard = Vec::with_capacity(betas.len());
    let mut est_error = 0.0f64;
    for (o, dsc, e) in results {
        ops.push(o);
        discard.push(dsc);
        est_error = est_error.max(e);
    }
    Ok(RegionOperatorSet { space, geometry: g.clone(), detector: *d, betas: betas.to_vec(), r_int: r, ops, discard, est_error })
}

/// `max_k ‖Σ_z [R^z_k]' − I‖_max` on the leading `dim − 3` block.
pub fn povm_completeness_defect(set: &RegionOperatorSet) -> Result<f64> {
    if set.geometry.delta != 0.0 {
        return Err(domain("completeness defect is defined for Δ = 0 only"));
    }
    let dim = set.space.dim();
    let keep = dim.saturating_sub(3).max(1);
    let mut worst = 0.0f64;
    for k in 0..set.num_states() {
        let s = set.pass_operator(k);
        let sub = linalg::block(&s, 0, 0, keep);
        worst = worst.max(linalg::max_abs(&linalg::sub(&sub, &linalg::identity(keep))));
    }
    Ok(worst)
}

/// Helper for tests and diagnostics: the rectangle of region `z` clipped to `r`.
pub fn clipped_region(g: &KeyMapGeometry, z: usize, r: f64) -> Rect {
    let rect = g.region(z);
    Rect { x_lo: clip(rect.x_lo, r), x_hi: clip(rect.x_hi, r), y_lo: clip(rect.y_lo, r), y_hi: clip(rect.y_hi, r) }
}

const CACHE_MAGIC: &[u8; 4] = b"CVQR";
const CACHE_VERSION: u32 = 1;

/// On-disk cache of region-operator sets keyed by a hash of every input.
#[derive(Clone, Debug)]
pub struct RegionCache {
    dir: PathBuf,
}

impl RegionCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.cvqr"))
    }

    pub fn get_or_build(
        &self,
        betas: &[C64],
        d: &DetectorModel,
        g: &KeyMapGeometry,
        space: FockSpace,
        rule: &QuadratureRule,
    ) -> Result<RegionOperatorSet> {
        let max_beta = betas.iter().map(|b| b.norm()).fold(0.0, f64::max);
        let r = rule.r_int.unwrap_or_else(|| default_r_int(d.eta_d, max_beta)).min(g.range_m);
        let key = cache_key(g, d, betas, space, r);
        let path = self.path(&key);
        if path.exists() {
            if let Ok((ops, discard, err)) = read_cache(&path, betas.len(), g.num_regions(), space.dim()) {
                return Ok(RegionOperatorSet {
                    space,
                    geometry: g.clone(),
                    detector: *d,
                    betas: betas.to_vec(),
                    r_int: r,
                    ops,
                    discard,
                    est_error: err,
                });
            }
        }
        let set = region_operator_set(betas, d, g, space, rule)?;
        fs::create_dir_all(&self.dir)?;
        write_cache(&path, &set)?;
        Ok(set)
    }
}

fn write_mat(w: &mut impl Write, m: &CMat) -> std::io::Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            w.write_f64::<LittleEndian>(m[(i, j)].re)?;
            w.write_f64::<LittleEndian>(m[(i, j)].im)?;
        }
    }
    Ok(())
}

fn read_mat(r: &mut impl Read, dim: usize) -> std::io::Result<CMat> {
    let mut m = linalg::zeros(dim, dim);
    for j in 0..dim {
        for i in 0..dim {
            let re = r.read_f64::<LittleEndian>()?;
            let im = r.read_f64::<LittleEndian>()?;
            m[(i, j)] = C64::new(re, im);
        }
    }
    Ok(m)
}

fn write_cache(path: &Path, set: &RegionOperatorSet) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        w.write_all(CACHE_MAGIC)?;
        w.write_u32::<LittleEndian>(CACHE_VERSION)?;
        w.write_u32::<LittleEndian>(set.num_states() as u32)?;
        w.write_u32::<LittleEndian>(set.num_regions() as u32)?;
        w.write_u32::<LittleEndian>(set.space.dim() as u32)?;
        w.write_f64::<LittleEndian>(set.est_error)?;
        for (row, dsc) in set.ops.iter().zip(&set.discard) {
            for m in row {
                write_mat(&mut w, m)?;
            }
            write_mat(&mut w, dsc)?;
        }
        w.flush()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

type CacheBody = (Vec<Vec<CMat>>, Vec<CMat>, f64);

fn read_cache(path: &Path, nk: usize, nz: usize, dim: usize) -> Result<CacheBody> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    let bad = |what: &str| Error::Build(format!("region cache {}: {what}", path.display()));
    if &magic != CACHE_MAGIC || r.read_u32::<LittleEndian>()? != CACHE_VERSION {
        return Err(bad("bad header"));
    }
    let (k, z, d) = (r.read_u32::<LittleEndian>()?, r.read_u32::<LittleEndian>()?, r.read_u32::<LittleEndian>()?);
    if (k as usize, z as usize, d as usize) != (nk, nz, dim) {
        return Err(bad("shape mismatch"));
    }
    let err = r.read_f64::<LittleEndian>()?;
    let mut ops = Vec::with_capacity(nk);
    let mut discard = Vec::with_capacity(nk);
    for _ in 0..nk {
        let mut row = Vec::with_capacity(nz);
        for _ in 0..nz {
            row.push(read_mat(&mut r, dim)?);
        }
        ops.push(row);
        discard.push(read_mat(&mut r, dim)?);
    }
    Ok((ops, discard, err))
}
