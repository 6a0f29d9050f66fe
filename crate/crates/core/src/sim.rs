//! Monte Carlo protocol rounds: state choice, trusted heterodyne outcomes under
//! the Gaussian channel model, energy and acceptance tests, key map.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, ConditionalDistribution};
use crate::constellation::Constellation;
use crate::detector::{key_map, DetectorModel, KeyMapGeometry};
use crate::error::{domain, Result};
use crate::estimation::{MomentEstimate, Sample, SampleSet};
use crate::linalg::C64;
use crate::sdp::MomentBounds;

/// Rounds drawn from one derived stream.
const CHUNK: usize = 1 << 16;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimConfig {
    pub constellation: Constellation,
    pub channel: ChannelParams,
    pub detector: DetectorModel,
    pub geometry: KeyMapGeometry,
    pub rounds: usize,
    pub seed: u64,
    pub test_fraction: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds < 1 {
            return Err(domain("at least one round is needed"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(domain(format!("test fraction must lie in (0, 1), got {}", self.test_fraction)));
        }
        Ok(())
    }

    pub fn num_test(&self) -> usize {
        ((self.rounds as f64 * self.test_fraction).round() as usize).min(self.rounds)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyOutcome {
    pub pass: bool,
    pub exceedances: u64,
    pub beta_test: f64,
    pub l_t: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentMargin {
    pub state: usize,
    /// Distance to the upper and lower acceptance limits of `<n̂>` (negative when outside).
    pub n_upper: f64,
    pub n_lower: f64,
    pub n2_upper: f64,
    pub n2_lower: f64,
}

impl MomentMargin {
    pub fn min(&self) -> f64 {
        self.n_upper.min(self.n_lower).min(self.n2_upper).min(self.n2_lower)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceOutcome {
    pub pass: bool,
    pub margins: Vec<MomentMargin>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KeyMapOutcome {
    /// `None` marks a discarded round.
    pub symbols: Vec<Option<u8>>,
    /// Counts indexed `[k][z]`, discards in the last column.
    pub histogram: Vec<Vec<u64>>,
    pub p_pass: f64,
}

impl KeyMapOutcome {
    /// Row-normalised histogram.
    pub fn empirical_conditional(&self) -> ConditionalDistribution {
        let table = self
            .histogram
            .iter()
            .map(|row| {
                let tot: u64 = row.iter().sum();
                row.iter().map(|&c| if tot == 0 { 0.0 } else { c as f64 / tot as f64 }).collect()
            })
            .collect();
        ConditionalDistribution { table, p_pass: self.p_pass }
    }
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    pub samples: SampleSet,
    /// Rounds `0..num_test` are test rounds.
    pub num_test: usize,
    pub key: KeyMapOutcome,
}

impl SimOutput {
    pub fn test_samples(&self) -> SampleSet {
        self.samples.slice(0..self.num_test)
    }

    pub fn key_samples(&self) -> SampleSet {
        self.samples.slice(self.num_test..self.samples.len())
    }

    pub fn empirical_conditional(&self) -> ConditionalDistribution {
        self.key.empirical_conditional()
    }
}

fn draw_chunk(cfg: &SimConfig, index: &WeightedIndex<f64>, chunk: usize, len: usize) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chunk as u64);
    let gain = (cfg.detector.eta_d * cfg.channel.eta_t).sqrt();
    let sigma = (cfg.channel.outcome_variance(&cfg.detector) / 2.0).sqrt();
    let root2 = std::f64::consts::SQRT_2;
    (0..len)
        .map(|_| {
            let k = index.sample(&mut rng);
            let mean = cfg.constellation.points[k].0 * gain;
            let gx: f64 = rng.sample(StandardNormal);
            let gy: f64 = rng.sample(StandardNormal);
            let y = C64::new(mean.re + sigma * gx, mean.im + sigma * gy);
            Sample { k: k as u32, q: root2 * y.re, p: root2 * y.im }
        })
        .collect()
}

/// Draws every round; the first `r_test · rounds` are test rounds and the rest
/// are passed through the key map.
pub fn simulate(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let index = WeightedIndex::new(&cfg.constellation.probabilities).map_err(|e| domain(format!("priors: {e}")))?;
    let nchunks = cfg.rounds.div_ceil(CHUNK);
    let chunks: Vec<Vec<Sample>> = (0..nchunks)
        .into_par_iter()
        .map(|c| draw_chunk(cfg, &index, c, CHUNK.min(cfg.rounds - c * CHUNK)))
        .collect();
    let records: Vec<Sample> = chunks.into_iter().flatten().collect();
    let samples = SampleSet::new(cfg.constellation.len(), records)?;
    let num_test = cfg.num_test();
    let key = apply_key_map(&samples.records[num_test..], cfg.constellation.len(), &cfg.geometry);
    Ok(SimOutput { samples, num_test, key })
}

/// `|Y|²` in NU² for a record in SNU.
pub fn outcome_energy(s: &Sample) -> f64 {
    0.5 * (s.q * s.q + s.p * s.p)
}

/// Counts test rounds with `|Y|² ≥ β_test`; passes iff the count is at most `l_T`.
pub fn energy_test(test: &[Sample], beta_test: f64, l_t: u64) -> EnergyOutcome {
    let exceedances = test.iter().filter(|s| outcome_energy(s) >= beta_test).count() as u64;
    EnergyOutcome { pass: exceedances <= l_t, exceedances, beta_test, l_t }
}

/// Accepts iff every reconstructed moment lies in
/// `[expected − μ − w‖·‖_∞, expected + μ]`.
pub fn acceptance_test(estimates: &[MomentEstimate], expected: &[MomentBounds], w: f64) -> Result<AcceptanceOutcome> {
    if estimates.len() != expected.len() {
        return Err(domain(format!("{} estimates for {} expected states", estimates.len(), expected.len())));
    }
    let margins: Vec<MomentMargin> = estimates
        .iter()
        .zip(expected)
        .enumerate()
        .map(|(k, (e, b))| MomentMargin {
            state: k,
            n_upper: b.n + b.mu_n - e.n,
            n_lower: e.n - (b.n - b.mu_n - w * b.norm_n),
            n2_upper: b.n2 + b.mu_n2 - e.n2,
            n2_lower: e.n2 - (b.n2 - b.mu_n2 - w * b.norm_n2),
        })
        .collect();
    let pass = margins.iter().all(|m| m.min() >= 0.0);
    Ok(AcceptanceOutcome { pass, margins })
}

/// Maps each outcome to its region index (or discard) and tallies `(k, z)`.
pub fn apply_key_map(rounds: &[Sample], num_states: usize, g: &KeyMapGeometry) -> KeyMapOutcome {
    let nz = g.num_regions();
    let mut histogram = vec![vec![0u64; nz + 1]; num_states];
    let inv = std::f64::consts::FRAC_1_SQRT_2;
    let symbols: Vec<Option<u8>> = rounds
        .iter()
        .map(|s| {
            let z = key_map(C64::new(s.q * inv, s.p * inv), g);
            histogram[s.k as usize][z.unwrap_or(nz)] += 1;
            z.map(|z| z as u8)
        })
        .collect();
    let passed = symbols.iter().filter(|z| z.is_some()).count();
    let p_pass = if symbols.is_empty() { 0.0 } else { passed as f64 / symbols.len() as f64 };
    KeyMapOutcome { symbols, histogram, p_pass }
}
