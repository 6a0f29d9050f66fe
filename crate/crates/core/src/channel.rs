//! Gaussian channel statistics: moments, conditional key-map distribution,
//! error-correction leakage and the honest channel output state.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constellation::Constellation;
use crate::detector::{DetectorModel, KeyMapGeometry};
use crate::error::{domain, Result};
use crate::fock::{coherent_outer_element, overlap, CoherentAmplitude, FockSpace};
use crate::linalg::{self, CMat, C64};
use crate::special::{gauss_hermite, normal_interval_mass, shannon_entropy};

/// Lossy channel with input-referred excess noise `ξ` (SNU).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub distance_km: f64,
    pub loss_db_per_km: f64,
    pub eta_t: f64,
    pub xi: f64,
}

pub fn transmittance_from_distance(distance_km: f64, loss_db_per_km: f64) -> Result<f64> {
    if !(distance_km >= 0.0) {
        return Err(domain(format!("distance must be nonnegative, got {distance_km}")));
    }
    if !(loss_db_per_km > 0.0) {
        return Err(domain(format!("fiber loss must be positive, got {loss_db_per_km}")));
    }
    Ok(10f64.powf(-loss_db_per_km * distance_km / 10.0))
}

impl ChannelParams {
    pub fn from_distance(distance_km: f64, loss_db_per_km: f64, xi: f64) -> Result<Self> {
        let eta_t = transmittance_from_distance(distance_km, loss_db_per_km)?;
        Self::check_xi(xi)?;
        Ok(Self { distance_km, loss_db_per_km, eta_t, xi })
    }

    /// Channel given directly by its transmittance; distance is back-computed
    /// with the supplied loss coefficient.
    pub fn from_transmittance(eta_t: f64, xi: f64, loss_db_per_km: f64) -> Result<Self> {
        if !(eta_t > 0.0 && eta_t <= 1.0) {
            return Err(domain(format!("transmittance must lie in (0, 1], got {eta_t}")));
        }
        Self::check_xi(xi)?;
        let distance_km = -10.0 * eta_t.log10() / loss_db_per_km;
        Ok(Self { distance_km, loss_db_per_km, eta_t, xi })
    }

    fn check_xi(xi: f64) -> Result<()> {
        if !(xi >= 0.0) || !xi.is_finite() {
            return Err(domain(format!("excess noise must be nonnegative, got {xi}")));
        }
        Ok(())
    }

    /// Mean photon number of the channel-added noise at Bob's input, `η_t ξ / 2`.
    pub fn added_photons(&self) -> f64 {
        self.eta_t * self.xi / 2.0
    }

    /// Total complex variance of Bob's outcome, `1 + ½η_d η_t ξ + ν_el`.
    pub fn outcome_variance(&self, d: &DetectorModel) -> f64 {
        1.0 + 0.5 * d.eta_d * self.eta_t * self.xi + d.nu_el
    }
}

/// `(<n̂_β>, <n̂²_β>) = (η_t ξ/2, η_t ξ(η_t ξ + 1)/2)`, the same for every state.
pub fn analytic_moments(ch: &ChannelParams) -> (f64, f64) {
    let s = ch.eta_t * ch.xi;
    (s / 2.0, s * (s + 1.0) / 2.0)
}

/// `P(Z = z | X = k)` with the discard symbol in the last column.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionalDistribution {
    pub table: Vec<Vec<f64>>,
    pub p_pass: f64,
}

impl ConditionalDistribution {
    pub fn num_regions(&self) -> usize {
        self.table.first().map(|r| r.len() - 1).unwrap_or(0)
    }

    /// Joint distribution `P_k P(z|k)` restricted to passing rounds and renormalized.
    pub fn post_selected_joint(&self, priors: &[f64]) -> Vec<Vec<f64>> {
        let nz = self.num_regions();
        let mut joint: Vec<Vec<f64>> = self.table.iter().zip(priors).map(|(row, p)| row[..nz].iter().map(|v| v * p).collect()).collect();
        let total: f64 = joint.iter().flatten().sum();
        if total > 0.0 {
            for row in &mut joint {
                for v in row.iter_mut() {
                    *v /= total;
                }
            }
        }
        joint
    }

    /// `(H(Z), H(Z|X))` of the post-selected joint distribution, in bits.
    pub fn post_selected_entropies(&self, priors: &[f64]) -> (f64, f64) {
        let joint = self.post_selected_joint(priors);
        let nz = self.num_regions();
        let pz: Vec<f64> = (0..nz).map(|z| joint.iter().map(|r| r[z]).sum()).collect();
        let px: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
        let flat: Vec<f64> = joint.iter().flatten().copied().collect();
        let h_z = shannon_entropy(&pz);
        let h_xz = shannon_entropy(&flat);
        let h_x = shannon_entropy(&px);
        (h_z, (h_xz - h_x).max(0.0))
    }
}

/// Closed-form Gaussian masses of every key-map rectangle (and ⊥).
pub fn conditional_distribution(
    c: &Constellation,
    ch: &ChannelParams,
    d: &DetectorModel,
    g: &KeyMapGeometry,
) -> ConditionalDistribution {
    let sigma = (ch.outcome_variance(d) / 2.0).sqrt();
    let scale = (d.eta_d * ch.eta_t).sqrt();
    let m = g.range_m;
    let iv: Vec<(f64, f64)> = g.intervals().into_iter().map(|(lo, hi)| (lo.max(-m), hi.min(m))).collect();
    let side = g.side();
    let mut table = Vec::with_capacity(c.len());
    for a in &c.points {
        let mu = a.0 * scale;
        let mx: Vec<f64> = iv.iter().map(|&(lo, hi)| normal_interval_mass(lo, hi, mu.re, sigma)).collect();
        let my: Vec<f64> = iv.iter().map(|&(lo, hi)| normal_interval_mass(lo, hi, mu.im, sigma)).collect();
        let mut row = Vec::with_capacity(side * side + 1);
        for r in 0..side {
            for col in 0..side {
                row.push(my[r] * mx[col]);
            }
        }
        let pass: f64 = row.iter().sum();
        row.push((1.0 - pass).max(0.0));
        table.push(row);
    }
    let p_pass = c.probabilities.iter().zip(&table).map(|(p, row)| p * (1.0 - row[side * side])).sum();
    ConditionalDistribution { table, p_pass }
}

/// `p_pass { n[(1-β)H(Z) + βH(Z|X)] + log₂(2/ε_EC) }` in bits.
pub fn ec_leakage(dist: &ConditionalDistribution, priors: &[f64], n: f64, beta: f64, eps_ec: f64) -> Result<f64> {
    if !(eps_ec > 0.0) {
        return Err(domain(format!("ε_EC must be positive, got {eps_ec}")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(domain(format!("reconciliation efficiency must lie in (0, 1], got {beta}")));
    }
    let (h_z, h_zx) = dist.post_selected_entropies(priors);
    Ok(dist.p_pass * (n * ((1.0 - beta) * h_z + beta * h_zx) + (2.0 / eps_ec).log2()))
}

/// Honest channel output in the displaced bases `{|k> ⊗ |n_{β_k}>}`.
///
/// Block `(k, k')` is `√(P_k P_k') <α_k'|α_k>^{1-η_t} ∫ p(γ) e^{2i Im(γ(β_k-β_k')*)} |γ><γ| d²γ`
/// with `p` the isotropic Gaussian of mean photon number `η_t ξ / 2`.
pub fn honest_state(c: &Constellation, ch: &ChannelParams, space: FockSpace) -> CMat {
    let nk = c.len();
    let dim = space.dim();
    let betas = c.received(ch.eta_t);
    let loss = (1.0 - ch.eta_t).max(0.0).sqrt();
    let nbar = ch.added_photons();
    let (gx, gw) = gauss_hermite(if nbar > 0.0 { 40 } else { 1 });
    let mut rho = linalg::zeros(nk * dim, nk * dim);
    for k in 0..nk {
        for kp in k..nk {
            let weight = (c.probabilities[k] * c.probabilities[kp]).sqrt()
                * overlap(CoherentAmplitude(c.points[k].0 * loss), CoherentAmplitude(c.points[kp].0 * loss));
            let delta = betas[k] - betas[kp];
            let mut block = linalg::zeros(dim, dim);
            if nbar == 0.0 {
                block[(0, 0)] = C64::new(1.0, 0.0);
            } else {
                let s = nbar.sqrt();
                for (u, wu) in gx.iter().zip(&gw) {
                    for (v, wv) in gx.iter().zip(&gw) {
                        let gamma = C64::new(u * s, v * s);
                        let phase = C64::from_polar(1.0, 2.0 * (gamma * delta.conj()).im);
                        let w = phase * (wu * wv / PI);
                        for m in 0..dim {
                            for n in 0..dim {
                                block[(m, n)] += w * coherent_outer_element(m, n, gamma);
                            }
                        }
                    }
                }
            }
            for m in 0..dim {
                for n in 0..dim {
                    let v = block[(m, n)] * weight;
                    rho[(k * dim + m, kp * dim + n)] = v;
                    if k != kp {
                        rho[(kp * dim + n, k * dim + m)] = v.conj();
                    }
                }
            }
        }
    }
    linalg::hermitize_in_place(&mut rho);
    rho
}
