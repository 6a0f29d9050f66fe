//! `f(ρ) = D(G(ρ) ‖ Z(G(ρ)))` in bits and its gradient.
//!
//! With Kraus blocks `T_z = ⊕_k √[R^z_k]'` and `S = ⊕_k √(Σ_z [R^z_k]')` the
//! non-zero spectrum of `G(ρ)` is that of `SρS`, so
//! `f = Tr σ log σ − Σ_z Tr Z_z log Z_z` with `σ = SρS`, `Z_z = T_z ρ T_z`.

use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::linalg::{self, CMat};

use super::problem::KeyRateProblem;

/// Eigenvalue floor inside the logarithms.
pub const EPS_PERT: f64 = 1e-10;

/// `(⊕_k A_k) ρ (⊕_k A_k)` computed block by block.
pub fn block_sandwich(ops: &[&CMat], rho: &CMat) -> CMat {
    let nk = ops.len();
    let d = ops[0].nrows();
    let mut out = linalg::zeros(nk * d, nk * d);
    for k in 0..nk {
        for kp in k..nk {
            let blk = linalg::block_rect(rho, k * d, kp * d, d, d);
            let prod = &(ops[k] * &blk) * ops[kp];
            for j in 0..d {
                for i in 0..d {
                    out[(k * d + i, kp * d + j)] = prod[(i, j)];
                    if k != kp {
                        out[(kp * d + j, k * d + i)] = prod[(i, j)].conj();
                    }
                }
            }
        }
    }
    linalg::hermitize_in_place(&mut out);
    out
}

fn xlogx_floored(vals: &[f64], eps: f64) -> f64 {
    vals.iter().map(|&v| v * v.max(eps).log2()).sum()
}

/// The operators entering `f`: `S` first, then each `T_z`.
fn operator_families(p: &KeyRateProblem) -> Vec<Vec<&CMat>> {
    let nz = p.num_regions();
    let mut fams = Vec::with_capacity(nz + 1);
    fams.push(p.pass_root.iter().collect());
    for z in 0..nz {
        fams.push(p.kraus.iter().map(|row| &row[z]).collect());
    }
    fams
}

/// `f(ρ)` in bits, eigenvalues only (used inside line searches).
pub fn objective(p: &KeyRateProblem, rho: &CMat, eps: f64) -> Result<f64> {
    let fams = operator_families(p);
    let terms: Vec<f64> = fams
        .par_iter()
        .map(|ops| {
            let m = block_sandwich(ops, rho);
            linalg::eigvalsh(&m).map(|v| xlogx_floored(&v, eps))
        })
        .collect::<Result<_>>()?;
    Ok(terms[0] - terms[1..].iter().sum::<f64>())
}

/// `f(ρ)` and `∇f(ρ) = S log σ S − Σ_z T_z log Z_z T_z` (bits).
pub fn objective_and_gradient(p: &KeyRateProblem, rho: &CMat, eps: f64) -> Result<(f64, CMat)> {
    let lmin = linalg::min_eigenvalue(rho)?;
    if lmin < -1e-6 {
        return Err(domain(format!("ρ has eigenvalue {lmin:.3e} below −1e-6")));
    }
    let tr = linalg::trace(rho).re;
    if tr > 1.0 + 1e-6 {
        return Err(domain(format!("ρ has trace {tr} above 1")));
    }
    let fams = operator_families(p);
    let parts: Vec<(f64, CMat)> = fams
        .par_iter()
        .map(|ops| {
            let m = block_sandwich(ops, rho);
            let (vals, vecs) = linalg::eigh(&m)?;
            let log = linalg::spectral_map(&vals, &vecs, |v| v.max(eps).log2());
            Ok((xlogx_floored(&vals, eps), block_sandwich(ops, &log)))
        })
        .collect::<Result<_>>()?;
    let mut grad = parts[0].1.clone();
    let mut f = parts[0].0;
    for (v, g) in &parts[1..] {
        f -= v;
        grad = linalg::sub(&grad, g);
    }
    linalg::hermitize_in_place(&mut grad);
    Ok((f, grad))
}

/// Correction for the eigenvalue floor, `2 d ε log₂(d/ε)`.
pub fn zeta(dim: usize, eps: f64) -> f64 {
    let d = dim as f64;
    2.0 * d * eps * (d / eps).log2()
}
