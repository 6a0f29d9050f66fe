//! Dense complex Hermitian helpers on top of `faer`.
//!
//! Everything here operates on `faer::Mat<C64>`. Eigen-decompositions assume the
//! input is Hermitian and only read the lower triangle.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Par, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = Mat<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

pub fn zeros(rows: usize, cols: usize) -> CMat {
    Mat::zeros(rows, cols)
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

pub fn diagonal(values: &[f64]) -> CMat {
    let n = values.len();
    Mat::from_fn(n, n, |i, j| if i == j { C64::new(values[i], 0.0) } else { ZERO })
}

pub fn adjoint(a: &CMat) -> CMat {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)].conj())
}

pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    a * b
}

/// `a * b * a^H`
pub fn sandwich(a: &CMat, b: &CMat) -> CMat {
    let ab = a * b;
    &ab * a.adjoint()
}

/// Largest absolute entry of `A - A^H`.
pub fn hermitian_residue(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Returns `(A + A^H) / 2` together with the discarded anti-Hermitian magnitude.
pub fn hermitize(a: &CMat) -> (CMat, f64) {
    let residue = hermitian_residue(a) / 2.0;
    let n = a.nrows();
    let h = Mat::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5);
    (h, residue)
}

pub fn hermitize_in_place(a: &mut CMat) {
    let n = a.nrows();
    for j in 0..n {
        a[(j, j)] = C64::new(a[(j, j)].re, 0.0);
        for i in (j + 1)..n {
            let v = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = v;
            a[(j, i)] = v.conj();
        }
    }
}

pub fn trace(a: &CMat) -> C64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// `Tr(A B)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> C64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = ZERO;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// `Re Tr(A B)`; for Hermitian arguments this is the Frobenius inner product.
pub fn inner(a: &CMat, b: &CMat) -> f64 {
    trace_product(a, b).re
}

pub fn max_abs(a: &CMat) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn frobenius(a: &CMat) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

pub fn scale(a: &CMat, s: f64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn scale_c(a: &CMat, s: C64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn add(a: &CMat, b: &CMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] + b[(i, j)])
}

pub fn sub(a: &CMat, b: &CMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - b[(i, j)])
}

/// `a + t * b`
pub fn add_scaled(a: &CMat, t: f64, b: &CMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] + b[(i, j)] * t)
}

/// `a <- a + t * b`
pub fn axpy(a: &mut CMat, t: C64, b: &CMat) {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            a[(i, j)] += b[(i, j)] * t;
        }
    }
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn eigh(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("hermitian eigendecomposition: {e:?}")))?;
    let s = evd.S().column_vector();
    let vals = (0..a.nrows()).map(|i| s[i].re).collect();
    Ok((vals, evd.U().to_owned()))
}

/// Eigenvalues (ascending) of a Hermitian matrix.
pub fn eigvalsh(a: &CMat) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("hermitian eigenvalues: {e:?}")))
}

pub fn min_eigenvalue(a: &CMat) -> Result<f64> {
    Ok(eigvalsh(a)?.first().copied().unwrap_or(0.0))
}

pub fn max_eigenvalue(a: &CMat) -> Result<f64> {
    Ok(eigvalsh(a)?.last().copied().unwrap_or(0.0))
}

/// `U diag(f(λ)) U^H` for a precomputed decomposition.
pub fn spectral_map(vals: &[f64], vecs: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let n = vecs.nrows();
    let k = vals.len();
    let weighted = Mat::from_fn(n, k, |i, j| vecs[(i, j)] * f(vals[j]));
    let mut out = &weighted * vecs.adjoint();
    hermitize_in_place(&mut out);
    out
}

pub fn hermitian_function(a: &CMat, f: impl Fn(f64) -> f64) -> Result<CMat> {
    let (vals, vecs) = eigh(a)?;
    Ok(spectral_map(&vals, &vecs, f))
}

/// Square root of a PSD matrix, clipping negative eigenvalues to zero.
/// Returns the root and the magnitude of the most negative clipped eigenvalue.
pub fn psd_sqrt(a: &CMat) -> Result<(CMat, f64)> {
    let (vals, vecs) = eigh(a)?;
    let clipped = vals.iter().fold(0.0f64, |acc, &v| acc.max(-v));
    Ok((spectral_map(&vals, &vecs, |v| v.max(0.0).sqrt()), clipped))
}

/// Inverse of a Hermitian positive definite matrix via Cholesky.
pub fn hpd_inverse(a: &CMat) -> Result<CMat> {
    let llt = a
        .llt(Side::Lower)
        .map_err(|e| Error::Numerical(format!("cholesky: {e:?}")))?;
    let mut inv = llt.inverse();
    hermitize_in_place(&mut inv);
    Ok(inv)
}

/// Lower Cholesky factor of a Hermitian positive definite matrix.
pub fn cholesky_lower(a: &CMat) -> Result<CMat> {
    let llt = a
        .llt(Side::Lower)
        .map_err(|e| Error::Numerical(format!("cholesky: {e:?}")))?;
    Ok(llt.L().to_owned())
}

pub fn invert_lower(l: &CMat) -> CMat {
    let n = l.nrows();
    let mut out = zeros(n, n);
    faer::linalg::triangular_inverse::invert_lower_triangular(out.as_mut(), l.as_ref(), Par::Seq);
    out
}

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let mut squarings = 0u32;
    if norm1 > 0.25 {
        squarings = (norm1 / 0.25).log2().ceil() as u32;
    }
    let scaled = scale(a, 0.5f64.powi(squarings as i32));
    // ||scaled|| <= 1/4, so 18 terms reach well below 1e-17 relative.
    let mut result = identity(n);
    let mut term = identity(n);
    for k in 1..=18 {
        term = &term * &scaled;
        term = scale(&term, 1.0 / k as f64);
        result = add(&result, &term);
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Extract the `size x size` block at block coordinates `(bi, bj)`.
pub fn block(a: &CMat, bi: usize, bj: usize, size: usize) -> CMat {
    Mat::from_fn(size, size, |i, j| a[(bi * size + i, bj * size + j)])
}

/// Copy of the `rows × cols` sub-matrix starting at `(r0, c0)`.
pub fn block_rect(a: &CMat, r0: usize, c0: usize, rows: usize, cols: usize) -> CMat {
    Mat::from_fn(rows, cols, |i, j| a[(r0 + i, c0 + j)])
}

pub fn set_block(a: &mut CMat, bi: usize, bj: usize, b: &CMat) {
    let size = b.nrows();
    for j in 0..b.ncols() {
        for i in 0..size {
            a[(bi * size + i, bj * size + j)] = b[(i, j)];
        }
    }
}

/// Block-diagonal matrix from equal-sized Hermitian blocks.
pub fn block_diagonal(blocks: &[CMat]) -> CMat {
    let size = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    let n = size * blocks.len();
    let mut out = zeros(n, n);
    for (k, b) in blocks.iter().enumerate() {
        set_block(&mut out, k, k, b);
    }
    out
}

/// Minimum eigenvalue clipped to numerical noise; used by PSD assertions.
pub fn is_psd(a: &CMat, tol: f64) -> Result<bool> {
    Ok(min_eigenvalue(a)? >= -tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hermitian(n: usize, seed: u64) -> CMat {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64) / (1u64 << 53) as f64 - 0.5
        };
        let mut a = zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = if i == j { C64::new(next(), 0.0) } else { C64::new(next(), next()) };
                a[(i, j)] = v;
                a[(j, i)] = v.conj();
            }
        }
        a
    }

    #[test]
    fn spectral_map_reconstructs() {
        let a = random_hermitian(7, 3);
        let (vals, vecs) = eigh(&a).unwrap();
        let back = spectral_map(&vals, &vecs, |x| x);
        assert!(max_abs(&sub(&a, &back)) < 1e-12);
    }

    #[test]
    fn expm_of_diagonal() {
        let d = diagonal(&[0.0, 1.0, -2.0, 3.5]);
        let e = expm(&d);
        for (i, v) in [0.0f64, 1.0, -2.0, 3.5].iter().enumerate() {
            assert!((e[(i, i)].re - v.exp()).abs() < 1e-12 * v.exp().max(1.0));
        }
    }

    #[test]
    fn expm_of_antihermitian_is_unitary() {
        let h = random_hermitian(6, 11);
        let ah = scale_c(&h, C64::new(0.0, 3.0));
        let u = expm(&ah);
        let uu = &u * u.adjoint();
        assert!(max_abs(&sub(&uu, &identity(6))) < 1e-12);
    }

    #[test]
    fn inverse_and_sqrt() {
        let a = random_hermitian(5, 5);
        let pd = add(&(&a * &a), &identity(5));
        let inv = hpd_inverse(&pd).unwrap();
        assert!(max_abs(&sub(&(&pd * &inv), &identity(5))) < 1e-12);
        let (r, clipped) = psd_sqrt(&pd).unwrap();
        assert_eq!(clipped, 0.0);
        assert!(max_abs(&sub(&(&r * &r), &pd)) < 1e-12);
        let l = cholesky_lower(&pd).unwrap();
        let li = invert_lower(&l);
        assert!(max_abs(&sub(&(&li * &l), &identity(5))) < 1e-12);
    }
}
