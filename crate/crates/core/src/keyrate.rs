//! End-to-end key-rate evaluation: constellation, key-map geometry, region
//! operators, moment bounds, Frank–Wolfe solve, certificate and finite-size
//! assembly.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::channel::{analytic_moments, conditional_distribution, ec_leakage, honest_state, ChannelParams, ConditionalDistribution};
use crate::constellation::{build, Constellation, Modulation};
use crate::detector::{DetectorModel, KeyMapGeometry};
use crate::error::{domain, Result};
use crate::estimation::MomentEstimate;
use crate::finite_size::{acceptance_mu, key_length, weight_w, KeyRateResult, SecurityBudget, Throughput};
use crate::fock::FockSpace;
use crate::region::{region_operator_set, QuadratureRule, RegionCache, RegionOperatorSet};
use crate::sdp::{build_problem, certify_lower_bound, solve_primal_with, FwConfig, LowerBoundCert, MomentBounds};

/// How the per-observable test count `k_T` entering `μ` is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestCountPolicy {
    /// `min_k ⌊m P_k⌋` shared by every state.
    MinOverStates,
    /// `⌊m P_k⌋` for state `k`.
    #[default]
    PerState,
    /// A fixed count for every state.
    Fixed(f64),
}

/// Inputs of one key-rate evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyRateConfig {
    pub modulation: Modulation,
    /// Gibbs shaping parameter (16QAM only).
    pub shaping_nu: f64,
    pub v_a_snu: f64,
    pub channel: ChannelParams,
    pub detector: DetectorModel,
    /// Post-selection width before channel scaling (NU).
    pub delta0_nu: f64,
    pub budget: SecurityBudget,
    /// Reconciliation efficiency `β`.
    pub beta: f64,
    pub throughput: Throughput,
    pub fw: FwConfig,
    #[serde(default)]
    pub test_count: TestCountPolicy,
}

impl KeyRateConfig {
    /// Defaults used throughout: `ν = 0.2`, `β = 0.95`, 10% test rounds.
    pub fn new(modulation: Modulation, v_a_snu: f64, channel: ChannelParams, detector: DetectorModel, n_total: f64, cutoff: usize) -> Self {
        Self {
            modulation,
            shaping_nu: 0.2,
            v_a_snu,
            channel,
            detector,
            delta0_nu: 0.0,
            budget: SecurityBudget::with_test_ratio(n_total, 0.1, cutoff),
            beta: 0.95,
            throughput: Throughput::default(),
            fw: FwConfig { max_iters: 25, tol: 1e-4, ..FwConfig::default() },
            test_count: TestCountPolicy::default(),
        }
    }

    pub fn constellation(&self) -> Result<Constellation> {
        build(self.modulation, self.shaping_nu, self.v_a_snu)
    }

    pub fn geometry(&self, c: &Constellation) -> Result<KeyMapGeometry> {
        KeyMapGeometry::for_channel(c, self.channel.eta_t, &self.detector, self.delta0_nu)
    }

    pub fn space(&self) -> Result<FockSpace> {
        FockSpace::new(self.budget.cutoff)
    }
}

/// Where the photon-number moments come from.
#[derive(Clone, Debug)]
pub enum MomentSource {
    /// Gaussian channel prediction from the configured `(η_t, ξ)`.
    Analytic,
    /// Per-state estimates reconstructed from heterodyne records.
    Estimated(Vec<MomentEstimate>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub regions_s: f64,
    pub solve_s: f64,
    pub certify_s: f64,
    pub total_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    pub result: KeyRateResult,
    pub certificate: LowerBoundCert,
    pub fw_iterations: usize,
    pub fw_gap: f64,
    pub initial_violation: f64,
    pub k_t: f64,
    pub mu_n: f64,
    pub mu_n2: f64,
    pub h_z: f64,
    pub h_z_given_x: f64,
    pub p_pass: f64,
    pub ec_leak_bits: f64,
    pub povm_error_estimate: f64,
    pub timings: Timings,
}

/// Per-state test counts under the configured policy.
pub fn test_counts(cfg: &KeyRateConfig, c: &Constellation) -> Vec<f64> {
    match cfg.test_count {
        TestCountPolicy::MinOverStates => vec![cfg.budget.k_t(&c.probabilities); c.len()],
        TestCountPolicy::PerState => c.probabilities.iter().map(|p| (cfg.budget.m_test * p).floor().max(1.0)).collect(),
        TestCountPolicy::Fixed(k) => vec![k; c.len()],
    }
}

/// Moment bounds per state, the smallest test count and the largest `μ` pair.
pub fn moment_bounds(cfg: &KeyRateConfig, c: &Constellation, source: &MomentSource) -> Result<(Vec<MomentBounds>, f64, f64, f64)> {
    let nc = cfg.budget.cutoff as f64;
    let raw: Vec<(f64, f64)> = match source {
        MomentSource::Analytic => vec![analytic_moments(&cfg.channel); c.len()],
        MomentSource::Estimated(est) => {
            if est.len() != c.len() {
                return Err(domain(format!("{} moment estimates for {} states", est.len(), c.len())));
            }
            est.iter().map(|e| (e.n, e.n2)).collect()
        }
    };
    let counts = test_counts(cfg, c);
    let mut bounds = Vec::with_capacity(c.len());
    for (&(n, n2), &k_t) in raw.iter().zip(&counts) {
        let mu_n = acceptance_mu(nc, k_t, cfg.budget.eps_at)?;
        let mu_n2 = acceptance_mu(nc * nc, k_t, cfg.budget.eps_at)?;
        bounds.push(MomentBounds { n, n2, mu_n, mu_n2, norm_n: nc, norm_n2: nc * nc });
    }
    let k_min = counts.iter().copied().fold(f64::INFINITY, f64::min);
    let mu_n = bounds.iter().map(|b| b.mu_n).fold(0.0, f64::max);
    let mu_n2 = bounds.iter().map(|b| b.mu_n2).fold(0.0, f64::max);
    Ok((bounds, k_min, mu_n, mu_n2))
}

/// Statistical slack allowed on `<n̂²> − <n̂>` before data count as unphysical.
fn w_tolerance(source: &MomentSource) -> f64 {
    match source {
        MomentSource::Analytic => 1e-12,
        MomentSource::Estimated(est) => 5.0 * est.iter().map(|e| e.se_n + e.se_n2).fold(0.0, f64::max),
    }
}

pub fn region_operators(cfg: &KeyRateConfig, c: &Constellation, g: &KeyMapGeometry, cache: Option<&RegionCache>) -> Result<RegionOperatorSet> {
    let betas = c.received(cfg.channel.eta_t);
    let rule = QuadratureRule::default();
    let space = cfg.space()?;
    match cache {
        Some(cache) => cache.get_or_build(&betas, &cfg.detector, g, space, &rule),
        None => region_operator_set(&betas, &cfg.detector, g, space, &rule),
    }
}

/// Runs the full pipeline for one operating point.
pub fn evaluate(cfg: &KeyRateConfig, source: &MomentSource, cache: Option<&RegionCache>) -> Result<KeyRateReport> {
    let start = Instant::now();
    cfg.budget.validate()?;
    let c = cfg.constellation()?;
    let g = cfg.geometry(&c)?;
    let set = region_operators(cfg, &c, &g, cache)?;
    let regions_s = start.elapsed().as_secs_f64();

    let (bounds, k_t, mu_n, mu_n2) = moment_bounds(cfg, &c, source)?;
    let raw: Vec<(f64, f64)> = bounds.iter().map(|b| (b.n, b.n2)).collect();
    let w = weight_w(&raw, &c.probabilities, cfg.budget.cutoff, w_tolerance(source))?;
    let problem = build_problem(&c, &bounds, w, &set)?;

    // Warm start from the Gaussian channel whose added noise matches the mean
    // reconstructed photon number.
    let warm_channel = match source {
        MomentSource::Analytic => cfg.channel,
        MomentSource::Estimated(_) => {
            let n_mean: f64 = raw.iter().zip(&c.probabilities).map(|((n, _), p)| p * n.max(0.0)).sum();
            ChannelParams { xi: 2.0 * n_mean / cfg.channel.eta_t, ..cfg.channel }
        }
    };
    let problem = problem.with_initial(honest_state(&c, &warm_channel, cfg.space()?))?;
    let initial_violation = problem.max_violation(&problem.initial)?;

    let t = Instant::now();
    let it = solve_primal_with(&problem, &cfg.fw, &cfg.fw.solver)?;
    let solve_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let cert = certify_lower_bound(&problem, &it)?;
    let certify_s = t.elapsed().as_secs_f64();

    let dist = conditional_distribution(&c, &cfg.channel, &cfg.detector, &g);
    let (h_z, h_z_given_x) = dist.post_selected_entropies(&c.probabilities);
    let leak = ec_leakage(&dist, &c.probabilities, cfg.budget.n_key(), cfg.beta, cfg.budget.eps_ec)?;
    let result = key_length(it.objective, cert.certified_bits, &cfg.budget, leak, w, g.num_regions(), c.len(), &cfg.throughput)?;
    Ok(KeyRateReport {
        result,
        certificate: cert,
        fw_iterations: it.iterations,
        fw_gap: it.gap,
        initial_violation,
        k_t,
        mu_n,
        mu_n2,
        h_z,
        h_z_given_x,
        p_pass: dist.p_pass,
        ec_leak_bits: leak,
        povm_error_estimate: set.est_error,
        timings: Timings { regions_s, solve_s, certify_s, total_s: start.elapsed().as_secs_f64() },
    })
}

/// `P(Z|X)` and its post-selected entropies for a configuration.
pub fn classical_statistics(cfg: &KeyRateConfig) -> Result<(ConditionalDistribution, f64, f64)> {
    let c = cfg.constellation()?;
    let g = cfg.geometry(&c)?;
    let dist = conditional_distribution(&c, &cfg.channel, &cfg.detector, &g);
    let (h_z, h_zx) = dist.post_selected_entropies(&c.probabilities);
    Ok((dist, h_z, h_zx))
}
