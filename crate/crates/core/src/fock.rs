//! Truncated Fock-space states and operators.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::linalg::{self, CMat, C64, ZERO};
use crate::special::{laguerre, ln_factorial};

/// Photon-number space `span{|0>, ..., |N_c>}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FockSpace {
    cutoff: usize,
}

impl FockSpace {
    pub fn new(cutoff: usize) -> Result<Self> {
        if cutoff < 1 {
            return Err(domain("Fock cutoff must be at least 1"));
        }
        Ok(Self { cutoff })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.cutoff + 1
    }
}

/// A square matrix acting on a truncated Fock space.
#[derive(Clone, Debug)]
pub struct TruncatedOperator {
    pub space: FockSpace,
    pub entries: CMat,
}

impl TruncatedOperator {
    pub fn new(space: FockSpace, entries: CMat) -> Result<Self> {
        if entries.nrows() != space.dim() || entries.ncols() != space.dim() {
            return Err(crate::Error::Build(format!(
                "operator is {}x{}, space dimension is {}",
                entries.nrows(),
                entries.ncols(),
                space.dim()
            )));
        }
        Ok(Self { space, entries })
    }

    pub fn hermitian_residue(&self) -> f64 {
        linalg::hermitian_residue(&self.entries)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_residue() <= tol
    }

    pub fn adjoint(&self) -> Self {
        Self { space: self.space, entries: linalg::adjoint(&self.entries) }
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::eigvalsh(&self.entries)
    }

    /// Largest eigenvalue magnitude of a Hermitian operator.
    pub fn sup_norm(&self) -> Result<f64> {
        let ev = self.eigenvalues()?;
        Ok(ev.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }

    pub fn expectation(&self, psi: &[C64]) -> C64 {
        let n = self.space.dim();
        let mut acc = ZERO;
        for i in 0..n {
            for j in 0..n {
                acc += psi[i].conj() * self.entries[(i, j)] * psi[j];
            }
        }
        acc
    }
}

/// Complex coherent amplitude in natural units, `|α|²` = mean photon number.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherentAmplitude(pub C64);

impl CoherentAmplitude {
    pub fn new(re: f64, im: f64) -> Self {
        Self(C64::new(re, im))
    }

    pub fn value(&self) -> C64 {
        self.0
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.0.norm_sqr()
    }
}

impl From<C64> for CoherentAmplitude {
    fn from(v: C64) -> Self {
        Self(v)
    }
}

impl fmt::Display for CoherentAmplitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+.6}{:+.6}i", self.0.re, self.0.im)
    }
}

pub fn annihilation_matrix(space: FockSpace) -> TruncatedOperator {
    let d = space.dim();
    let mut a = linalg::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    TruncatedOperator { space, entries: a }
}

pub fn number_operator(space: FockSpace) -> TruncatedOperator {
    let vals: Vec<f64> = (0..space.dim()).map(|n| n as f64).collect();
    TruncatedOperator { space, entries: linalg::diagonal(&vals) }
}

/// Fock components `e^{-|α|²/2} αⁿ / √n!` for `n ≤ N_c`, not renormalized.
pub fn coherent_state_vector(space: FockSpace, alpha: CoherentAmplitude) -> Vec<C64> {
    let a = alpha.0;
    let pref = (-a.norm_sqr() / 2.0).exp();
    let mut out = Vec::with_capacity(space.dim());
    let mut c = C64::new(pref, 0.0);
    out.push(c);
    for n in 1..space.dim() {
        c = c * a / (n as f64).sqrt();
        out.push(c);
    }
    out
}

/// Probability mass of `|α>` above the cutoff.
pub fn truncation_deficit(space: FockSpace, alpha: CoherentAmplitude) -> f64 {
    let kept: f64 = coherent_state_vector(space, alpha).iter().map(|c| c.norm_sqr()).sum();
    (1.0 - kept).max(0.0)
}

/// Exact coherent overlap `<α'|α>`.
pub fn overlap(alpha: CoherentAmplitude, alpha_prime: CoherentAmplitude) -> C64 {
    let a = alpha.0;
    let b = alpha_prime.0;
    (C64::new(-a.norm_sqr() / 2.0 - b.norm_sqr() / 2.0, 0.0) + b.conj() * a).exp()
}

fn displacement_generator(dim: usize, gamma: C64) -> CMat {
    let mut g = linalg::zeros(dim, dim);
    for n in 1..dim {
        let s = (n as f64).sqrt();
        // γ a† has entry (n, n-1); -γ* a has entry (n-1, n)
        g[(n, n - 1)] = gamma * s;
        g[(n - 1, n)] = -gamma.conj() * s;
    }
    g
}

/// `exp(γa† − γ*a)` on the truncated space itself.
pub fn displacement_matrix(space: FockSpace, gamma: CoherentAmplitude) -> TruncatedOperator {
    let g = displacement_generator(space.dim(), gamma.0);
    TruncatedOperator { space, entries: linalg::expm(&g) }
}

/// Matrix elements `<m|D(γ)|n>` for `m, n ≤ N_c`, accurate to the untruncated values.
///
/// The exponential is taken on a padded space and the leading block returned.
pub fn displacement_elements(space: FockSpace, gamma: C64) -> CMat {
    let pad = padding_for(space.cutoff(), gamma.norm());
    let big = space.dim() + pad;
    let full = linalg::expm(&displacement_generator(big, gamma));
    linalg::block(&full, 0, 0, space.dim())
}

/// Closed-form `<m|D(γ)|n>` through associated Laguerre polynomials.
pub fn displacement_closed_form(space: FockSpace, gamma: C64) -> CMat {
    let x = gamma.norm_sqr();
    let damp = (-0.5 * x).exp();
    CMat::from_fn(space.dim(), space.dim(), |m, n| {
        let (hi, lo, base) = if m >= n { (m, n, gamma) } else { (n, m, -gamma.conj()) };
        let d = hi - lo;
        let mag = (0.5 * (ln_factorial(lo) - ln_factorial(hi))).exp();
        base.powu(d as u32) * (mag * damp * laguerre(lo, d as f64, x))
    })
}

fn padding_for(cutoff: usize, radius: f64) -> usize {
    let r = radius + 1.0;
    40 + (8.0 * r * r + 10.0 * r * (cutoff as f64 + 1.0).sqrt()).ceil() as usize
}

/// `D(β) n̂ D†(β)` and `D(β) n̂² D†(β)` with their truncated-space sup-norms.
#[derive(Clone, Debug)]
pub struct DisplacedObservables {
    pub n: TruncatedOperator,
    pub n2: TruncatedOperator,
    pub norm_n: f64,
    pub norm_n2: f64,
}

pub fn displaced_observables(space: FockSpace, beta: CoherentAmplitude) -> Result<DisplacedObservables> {
    let d = displacement_elements(space, beta.0);
    let nvals: Vec<f64> = (0..space.dim()).map(|n| n as f64).collect();
    let n2vals: Vec<f64> = nvals.iter().map(|v| v * v).collect();
    let n_op = linalg::sandwich(&d, &linalg::diagonal(&nvals));
    let n2_op = linalg::sandwich(&d, &linalg::diagonal(&n2vals));
    let (n_op, r1) = linalg::hermitize(&n_op);
    let (n2_op, r2) = linalg::hermitize(&n2_op);
    debug_assert!(r1 < 1e-10 * (1.0 + linalg::max_abs(&n_op)));
    debug_assert!(r2 < 1e-10 * (1.0 + linalg::max_abs(&n2_op)));
    let n = TruncatedOperator { space, entries: n_op };
    let n2 = TruncatedOperator { space, entries: n2_op };
    let norm_n = n.sup_norm()?;
    let norm_n2 = n2.sup_norm()?;
    Ok(DisplacedObservables { n, n2, norm_n, norm_n2 })
}

/// `<m|ψ>` projector `|ψ><ψ|` as a matrix.
pub fn projector(psi: &[C64]) -> CMat {
    let d = psi.len();
    CMat::from_fn(d, d, |i, j| psi[i] * psi[j].conj())
}

/// Thermal state diagonal `n̄^k / (1+n̄)^{k+1}` truncated (not renormalized).
pub fn thermal_diagonal(space: FockSpace, nbar: f64) -> Vec<f64> {
    (0..space.dim())
        .map(|k| {
            if nbar == 0.0 {
                if k == 0 { 1.0 } else { 0.0 }
            } else {
                (k as f64 * nbar.ln() - (k as f64 + 1.0) * (1.0 + nbar).ln()).exp()
            }
        })
        .collect()
}

/// `<m|γ><γ|n>` without building vectors; handy inside quadrature loops.
pub fn coherent_outer_element(m: usize, n: usize, gamma: C64) -> C64 {
    let r2 = gamma.norm_sqr();
    let mag = (-r2 - 0.5 * (ln_factorial(m) + ln_factorial(n))).exp();
    gamma.powu(m as u32) * gamma.conj().powu(n as u32) * mag
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;

    fn sp(n: usize) -> FockSpace {
        FockSpace::new(n).unwrap()
    }

    #[test]
    fn smallest_annihilation() {
        let a = annihilation_matrix(sp(1));
        assert_eq!(a.entries[(0, 1)], ONE);
        assert_eq!(a.entries[(0, 0)], ZERO);
        assert_eq!(a.entries[(1, 0)], ZERO);
        assert_eq!(a.entries[(1, 1)], ZERO);
        assert!(FockSpace::new(0).is_err());
    }

    #[test]
    fn number_from_ladder() {
        let a = annihilation_matrix(sp(2));
        let n = a.adjoint().entries * &a.entries;
        for k in 0..3 {
            assert!((n[(k, k)].re - k as f64).abs() < 1e-15);
        }
        let a4 = annihilation_matrix(sp(4));
        assert!((a4.entries[(2, 3)].re - 1.7320508075688772).abs() < 1e-15);
    }

    #[test]
    fn coherent_components() {
        let v = coherent_state_vector(sp(2), CoherentAmplitude::new(1.0, 0.0));
        assert!((v[2].re - (-0.5f64).exp() / 2f64.sqrt()).abs() < 1e-15);
        let v = coherent_state_vector(sp(20), CoherentAmplitude::new(1.0, 0.0));
        let norm: f64 = v.iter().map(|c| c.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        let vac = coherent_state_vector(sp(3), CoherentAmplitude::new(0.0, 0.0));
        assert_eq!(vac[0], ONE);
        assert!(vac[1..].iter().all(|c| *c == ZERO));
    }

    #[test]
    fn overlap_against_fock_sum() {
        let a = CoherentAmplitude::new(1.0, 1.0);
        let b = CoherentAmplitude::new(1.0, -1.0);
        let va = coherent_state_vector(sp(40), a);
        let vb = coherent_state_vector(sp(40), b);
        let brute: C64 = va.iter().zip(&vb).map(|(x, y)| y.conj() * x).sum();
        assert!((overlap(a, b) - brute).norm() < 1e-10);
        assert!((overlap(a, a) - ONE).norm() < 1e-15);
        let v = overlap(CoherentAmplitude::new(1.0, 0.0), CoherentAmplitude::new(0.0, 0.0));
        assert!((v.re - 0.6065306597126334).abs() < 1e-15);
    }

    #[test]
    fn displacement_properties() {
        let id = displacement_matrix(sp(5), CoherentAmplitude::new(0.0, 0.0));
        assert!(linalg::max_abs(&linalg::sub(&id.entries, &linalg::identity(6))) < 1e-15);

        let g = CoherentAmplitude::new(0.3, 0.0);
        let d = displacement_matrix(sp(30), g);
        let v = coherent_state_vector(sp(30), g);
        for n in 0..31 {
            assert!((d.entries[(n, 0)] - v[n]).norm() < 1e-8);
        }

        let d = displacement_matrix(sp(30), CoherentAmplitude::new(0.5, 0.0));
        let dd = d.adjoint().entries * &d.entries;
        let sub = linalg::block(&dd, 0, 0, 20);
        assert!(linalg::max_abs(&linalg::sub(&sub, &linalg::identity(20))) < 1e-8);
    }

    #[test]
    fn displaced_number_counts_offset() {
        let s = sp(20);
        let obs = displaced_observables(s, CoherentAmplitude::new(0.2, 0.0)).unwrap();
        let v = coherent_state_vector(s, CoherentAmplitude::new(0.3, 0.0));
        let e = obs.n.expectation(&v);
        assert!((e.re - 0.01).abs() < 1e-6);
        assert!(obs.n.is_hermitian(1e-10));

        let obs0 = displaced_observables(sp(10), CoherentAmplitude::new(0.0, 0.0)).unwrap();
        assert!((obs0.norm_n - 10.0).abs() < 1e-12);
        assert!((obs0.norm_n2 - 100.0).abs() < 1e-10);
    }

    #[test]
    fn coherent_outer_matches_vectors() {
        let g = C64::new(0.4, -0.7);
        let v = coherent_state_vector(sp(6), CoherentAmplitude(g));
        for m in 0..7 {
            for n in 0..7 {
                assert!((coherent_outer_element(m, n, g) - v[m] * v[n].conj()).norm() < 1e-15);
            }
        }
    }
    #[test]
    fn closed_form_displacement_matches_padded() {
        let space = FockSpace::new(12).unwrap();
        for g in [C64::new(0.3, -0.2), C64::new(-1.7, 0.9), C64::new(0.0, 2.4)] {
            let a = displacement_closed_form(space, g);
            let b = displacement_elements(space, g);
            assert!(linalg::max_abs(&linalg::sub(&a, &b)) < 1e-12);
        }
    }

}
