//! Probability-shaped 16QAM and QPSK constellations and Alice's reduced state.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::fock::{overlap, CoherentAmplitude};
use crate::linalg::{self, CMat, C64};

/// Grid levels in units of the half spacing, left to right / top to bottom.
pub const QAM16_LEVELS: [f64; 4] = [3.0, 1.0, -1.0, -3.0];
pub const QPSK_LEVELS: [f64; 2] = [1.0, -1.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Qpsk,
    #[serde(rename = "16qam")]
    Qam16,
}

impl Modulation {
    pub fn levels(&self) -> &'static [f64] {
        match self {
            Modulation::Qpsk => &QPSK_LEVELS,
            Modulation::Qam16 => &QAM16_LEVELS,
        }
    }

    pub fn size(&self) -> usize {
        self.levels().len().pow(2)
    }
}

impl std::str::FromStr for Modulation {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qpsk" => Ok(Modulation::Qpsk),
            "16qam" | "qam16" => Ok(Modulation::Qam16),
            other => Err(crate::Error::Config(format!("unknown protocol `{other}`"))),
        }
    }
}

/// Points are indexed `k = row * side + col`, columns running over the levels in
/// the order of [`Modulation::levels`] along the real axis and rows along the
/// imaginary axis from the top.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Constellation {
    pub modulation: Modulation,
    pub points: Vec<CoherentAmplitude>,
    pub probabilities: Vec<f64>,
    pub nu: f64,
    pub half_spacing: f64,
    /// Modulation variance in SNU.
    pub modulation_variance: f64,
}

/// `E[j²]` for the one-dimensional Gibbs marginal over `j ∈ {±1, ±3}`.
fn gibbs_second_moment(nu: f64) -> f64 {
    let r = (-8.0 * nu).exp();
    (1.0 + 9.0 * r) / (1.0 + r)
}

/// Probability-shaped 16QAM with Gibbs weights `exp(-ν(j_q² + j_p²))` over the
/// grid indices `j ∈ {±1, ±3}`; the half spacing is chosen so that the
/// modulation variance equals `v_a` (SNU).
pub fn build_16qam(nu: f64, v_a: f64) -> Result<Constellation> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(domain(format!("shaping parameter must be positive, got {nu}")));
    }
    if !(v_a > 0.0) || !v_a.is_finite() {
        return Err(domain(format!("modulation variance must be positive, got {v_a}")));
    }
    let a = (v_a / (4.0 * gibbs_second_moment(nu))).sqrt();
    let marginal: Vec<f64> = QAM16_LEVELS.iter().map(|j| (-nu * j * j).exp()).collect();
    let z: f64 = marginal.iter().sum();
    let mut points = Vec::with_capacity(16);
    let mut probabilities = Vec::with_capacity(16);
    for row in 0..4 {
        for col in 0..4 {
            points.push(CoherentAmplitude::new(QAM16_LEVELS[col] * a, QAM16_LEVELS[row] * a));
            probabilities.push(marginal[row] * marginal[col] / (z * z));
        }
    }
    Ok(Constellation { modulation: Modulation::Qam16, points, probabilities, nu, half_spacing: a, modulation_variance: v_a })
}

/// Uniform QPSK at `(±a ± ia)` with `4a² = v_a` (SNU).
pub fn build_qpsk(v_a: f64) -> Result<Constellation> {
    if !(v_a > 0.0) || !v_a.is_finite() {
        return Err(domain(format!("modulation variance must be positive, got {v_a}")));
    }
    let a = v_a.sqrt() / 2.0;
    let mut points = Vec::with_capacity(4);
    for row in 0..2 {
        for col in 0..2 {
            points.push(CoherentAmplitude::new(QPSK_LEVELS[col] * a, QPSK_LEVELS[row] * a));
        }
    }
    Ok(Constellation { modulation: Modulation::Qpsk, points, probabilities: vec![0.25; 4], nu: 0.0, half_spacing: a, modulation_variance: v_a })
}

pub fn build(modulation: Modulation, nu: f64, v_a: f64) -> Result<Constellation> {
    match modulation {
        Modulation::Qpsk => build_qpsk(v_a),
        Modulation::Qam16 => build_16qam(nu, v_a),
    }
}

impl Constellation {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Grid side length (2 or 4).
    pub fn side(&self) -> usize {
        self.modulation.levels().len()
    }

    /// `2 Σ P_k |α_k|²`, in SNU.
    pub fn reconstructed_variance(&self) -> f64 {
        2.0 * self.points.iter().zip(&self.probabilities).map(|(a, p)| p * a.mean_photon_number()).sum::<f64>()
    }

    pub fn min_probability(&self) -> f64 {
        self.probabilities.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_amplitude(&self) -> f64 {
        self.points.iter().map(|a| a.0.norm()).fold(0.0, f64::max)
    }

    /// Received amplitudes `β_k = √η_t α_k`.
    pub fn received(&self, eta_t: f64) -> Vec<C64> {
        self.points.iter().map(|a| a.0 * eta_t.sqrt()).collect()
    }

    /// Stable text identity used for cache keys and config hashes.
    pub fn canonical(&self) -> String {
        format!("{:?}|nu={:.17e}|va={:.17e}", self.modulation, self.nu, self.modulation_variance)
    }
}

/// Alice's reduced state `τ_A = Σ √(P_k P_k') <α_k'|α_k> |k><k'|`.
#[derive(Clone, Debug)]
pub struct AliceState {
    pub gram: CMat,
}

pub fn tau_a(c: &Constellation) -> AliceState {
    let n = c.len();
    let p = &c.probabilities;
    let gram = CMat::from_fn(n, n, |k, kp| overlap(c.points[k], c.points[kp]) * (p[k] * p[kp]).sqrt());
    AliceState { gram }
}

impl AliceState {
    pub fn trace(&self) -> f64 {
        linalg::trace(&self.gram).re
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::eigvalsh(&self.gram)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarianceUnit {
    Snu,
    Nu,
}

/// Converts a variance between shot-noise and natural units (1 SNU = 0.5 NU).
pub fn snu_nu_convert(x: f64, from: VarianceUnit) -> f64 {
    match from {
        VarianceUnit::Snu => x * 0.5,
        VarianceUnit::Nu => x * 2.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_state_vector, FockSpace};
    use proptest::prelude::*;

    #[test]
    fn qam16_normalization() {
        let c = build_16qam(0.2, 2.0).unwrap();
        let s: f64 = c.probabilities.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!((c.reconstructed_variance() - 2.0).abs() < 1e-10);
        // inner four points share the largest weight
        let inner = [5usize, 6, 9, 10];
        let pmax = c.probabilities.iter().copied().fold(0.0, f64::max);
        for &k in &inner {
            assert!((c.probabilities[k] - pmax).abs() < 1e-15);
        }
        assert!((c.half_spacing - 0.46188).abs() < 1e-4);
        assert_eq!(c.points[0], CoherentAmplitude::new(3.0 * c.half_spacing, 3.0 * c.half_spacing));
    }

    #[test]
    fn qam16_uniform_limit() {
        let c = build_16qam(1e-12, 1.0).unwrap();
        for p in &c.probabilities {
            assert!((p - 1.0 / 16.0).abs() < 1e-10);
        }
        assert!(build_16qam(0.0, 1.0).is_err());
        assert!(build_16qam(0.2, -1.0).is_err());
    }

    #[test]
    fn qpsk_amplitudes() {
        let c = build_qpsk(0.49).unwrap();
        for a in &c.points {
            assert!((a.mean_photon_number() - 0.245).abs() < 1e-15);
        }
        let c = build_qpsk(2.0).unwrap();
        assert!((c.points[3].mean_photon_number() - 1.0).abs() < 1e-15);
        assert!(c.probabilities.iter().all(|&p| p == 0.25));
    }

    #[test]
    fn tau_matches_fock_gram() {
        let c = build_16qam(0.2, 2.0).unwrap();
        let t = tau_a(&c);
        let space = FockSpace::new(40).unwrap();
        let vecs: Vec<Vec<C64>> = c
            .points
            .iter()
            .zip(&c.probabilities)
            .map(|(a, p)| coherent_state_vector(space, *a).into_iter().map(|v| v * p.sqrt()).collect())
            .collect();
        let gram = CMat::from_fn(16, 16, |k, kp| vecs[kp].iter().zip(&vecs[k]).map(|(b, a)| b.conj() * a).sum());
        let e1 = t.eigenvalues().unwrap();
        let e2 = linalg::eigvalsh(&gram).unwrap();
        for (a, b) in e1.iter().zip(&e2) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(e1[0] >= -1e-12);
        assert!((t.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tau_vacuum_limit() {
        let c = build_qpsk(1e-14).unwrap();
        let t = tau_a(&c);
        for i in 0..4 {
            for j in 0..4 {
                assert!((t.gram[(i, j)].re - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unit_conversion() {
        assert_eq!(snu_nu_convert(1.0, VarianceUnit::Snu), 0.5);
        assert_eq!(snu_nu_convert(0.0, VarianceUnit::Snu), 0.0);
        let x = 0.731;
        assert!((snu_nu_convert(snu_nu_convert(x, VarianceUnit::Snu), VarianceUnit::Nu) - x).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn variance_is_recovered(nu in 1e-3f64..1.0, v_a in 0.1f64..10.0) {
            let c = build_16qam(nu, v_a).unwrap();
            prop_assert!((c.reconstructed_variance() - v_a).abs() < 1e-10);
            prop_assert!((c.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn shaping_has_dihedral_symmetry(nu in 1e-3f64..1.0) {
            let c = build_16qam(nu, 1.0).unwrap();
            let idx = |row: usize, col: usize| row * 4 + col;
            for row in 0..4 {
                for col in 0..4 {
                    let p = c.probabilities[idx(row, col)];
                    prop_assert!((p - c.probabilities[idx(col, row)]).abs() < 1e-15);
                    prop_assert!((p - c.probabilities[idx(3 - row, col)]).abs() < 1e-15);
                    prop_assert!((p - c.probabilities[idx(row, 3 - col)]).abs() < 1e-15);
                }
            }
        }

        #[test]
        fn tau_is_a_state(nu in 1e-3f64..1.0, v_a in 0.1f64..6.0) {
            let t = tau_a(&build_16qam(nu, v_a).unwrap());
            prop_assert!((t.trace() - 1.0).abs() < 1e-10);
            prop_assert!(t.eigenvalues().unwrap()[0] > -1e-10);
            prop_assert!(linalg::hermitian_residue(&t.gram) < 1e-12);
        }
    }
}
