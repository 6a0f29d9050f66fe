//! Finite-size corrections and the composable key-length formula.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::constellation::Constellation;
use crate::detector::DetectorModel;
use crate::error::{domain, Error, Result};
use crate::special::binary_entropy;

/// Security parameters and round counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecurityBudget {
    pub eps_ec: f64,
    pub eps_pa: f64,
    pub eps_at: f64,
    pub eps_et: f64,
    pub eps_bar: f64,
    pub eps_pe: f64,
    /// Total rounds `N`.
    pub n_total: f64,
    /// Test rounds `m`.
    pub m_test: f64,
    pub cutoff: usize,
}

impl SecurityBudget {
    /// Budget with `ε_EC = ε_PA = 2e-11`, `ε_AT = 7e-11`, `ε_ET = ε̄ = 1e-11`
    /// and `ε_pe = 1e-10`.
    pub fn standard(n_total: f64, m_test: f64, cutoff: usize) -> Self {
        Self { eps_ec: 2e-11, eps_pa: 2e-11, eps_at: 7e-11, eps_et: 1e-11, eps_bar: 1e-11, eps_pe: 1e-10, n_total, m_test, cutoff }
    }

    /// Budget with a test fraction `r_test` of `N`.
    pub fn with_test_ratio(n_total: f64, r_test: f64, cutoff: usize) -> Self {
        Self::standard(n_total, (r_test * n_total).round(), cutoff)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, e) in [
            ("eps_ec", self.eps_ec),
            ("eps_pa", self.eps_pa),
            ("eps_at", self.eps_at),
            ("eps_et", self.eps_et),
            ("eps_bar", self.eps_bar),
            ("eps_pe", self.eps_pe),
        ] {
            if !(e > 0.0 && e < 1.0) {
                return Err(domain(format!("{name} must lie in (0, 1), got {e}")));
            }
        }
        if !(self.n_total >= 1.0) || !(self.m_test >= 1.0) || !(self.m_test < self.n_total) {
            return Err(domain(format!("inconsistent round counts N={} m={}", self.n_total, self.m_test)));
        }
        if self.cutoff < 1 {
            return Err(domain("cutoff must be at least 1"));
        }
        Ok(())
    }

    /// Key-generation rounds `n = N − m`.
    pub fn n_key(&self) -> f64 {
        self.n_total - self.m_test
    }

    /// `ε_EC + max{½ε_PA + ε̄, ε_ET + ε_AT}`
    pub fn total_epsilon(&self) -> f64 {
        self.eps_ec + (0.5 * self.eps_pa + self.eps_bar).max(self.eps_et + self.eps_at)
    }

    /// Per-state test count `min_k ⌊m P_k⌋`.
    pub fn k_t(&self, priors: &[f64]) -> f64 {
        priors.iter().map(|p| (self.m_test * p).floor()).fold(f64::INFINITY, f64::min).max(1.0)
    }
}

/// `w = Σ_k P_k (<n̂²> − <n̂>) / (N_c(N_c+1))`, clamped to `[0, 1]`.
///
/// A negative numerator below `-tolerance` is reported as inconsistent data.
pub fn weight_w(moments: &[(f64, f64)], priors: &[f64], cutoff: usize, tolerance: f64) -> Result<f64> {
    if cutoff < 1 {
        return Err(domain("cutoff must be at least 1"));
    }
    if moments.len() != priors.len() {
        return Err(domain("one moment pair per state is required"));
    }
    let num: f64 = moments.iter().zip(priors).map(|(&(n1, n2), p)| p * (n2 - n1)).sum();
    if num < -tolerance {
        return Err(Error::DataInconsistency(format!("Σ P_k(<n²> − <n>) = {num:.3e} is negative")));
    }
    let nc = cutoff as f64;
    Ok((num / (nc * (nc + 1.0))).clamp(0.0, 1.0))
}

/// `Δ(w) = √w log₂|Z| + (1+√w) h(√w/(1+√w))`
pub fn correction_delta_w(w: f64, num_symbols: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&w) {
        return Err(domain(format!("w must lie in [0, 1], got {w}")));
    }
    let s = w.sqrt();
    Ok(s * (num_symbols as f64).log2() + (1.0 + s) * binary_entropy(s / (1.0 + s)))
}

/// `δ(ε̄) = 2 log₂(rank + 3) √(log₂(2/ε̄)/n)`
pub fn smoothing_delta(eps_bar: f64, rank: usize, n: f64) -> Result<f64> {
    if !(n >= 1.0) {
        return Err(domain(format!("n must be at least 1, got {n}")));
    }
    Ok(2.0 * (rank as f64 + 3.0).log2() * ((2.0 / eps_bar).log2() / n).sqrt())
}

/// `μ = √(‖O‖²_∞ ln(2/ε_AT) / (2 k_T))`
pub fn acceptance_mu(op_norm: f64, k_t: f64, eps_at: f64) -> Result<f64> {
    if !(k_t >= 1.0) {
        return Err(domain(format!("k_T must be at least 1, got {k_t}")));
    }
    Ok((op_norm * op_norm * (2.0 / eps_at).ln() / (2.0 * k_t)).sqrt())
}

/// Repetition rate, training overhead and frame error rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub rep_rate_hz: f64,
    pub training_ratio: f64,
    pub fer: f64,
}

impl Default for Throughput {
    fn default() -> Self {
        Self { rep_rate_hz: 1e9, training_ratio: 0.25, fer: 0.15 }
    }
}

impl Throughput {
    /// `R (1−a)(1−FER) ℓ/N`
    pub fn rate_bps(&self, ell_over_n: f64) -> f64 {
        self.rep_rate_hz * (1.0 - self.training_ratio) * (1.0 - self.fer) * ell_over_n
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyRateResult {
    pub sdp_value: f64,
    pub certified_lower_bound: f64,
    pub w: f64,
    pub delta_w: f64,
    pub delta_eps_bar: f64,
    /// `δ_leak^EC / N`
    pub ec_leak_per_n: f64,
    /// `(2/N) log₂(1/ε_PA)`
    pub pa_term: f64,
    pub n_over_n_total: f64,
    /// Unclamped value of the key-length formula per round.
    pub ell_over_n_raw: f64,
    pub ell_over_n: f64,
    pub rate_bps: f64,
}

impl KeyRateResult {
    /// Re-evaluates the key-length formula from the stored components.
    pub fn reassembled(&self) -> f64 {
        self.n_over_n_total * (self.certified_lower_bound - self.delta_w - self.delta_eps_bar) - self.ec_leak_per_n - self.pa_term
    }
}

/// Assembles `ℓ/N = (n/N)[H − Δ(w) − δ(ε̄)] − δ_leak^EC/N − (2/N)log₂(1/ε_PA)`.
#[allow(clippy::too_many_arguments)]
pub fn key_length(
    sdp_value: f64,
    sdp_lb: f64,
    budget: &SecurityBudget,
    ec_leak_bits: f64,
    w: f64,
    num_symbols: usize,
    rank: usize,
    throughput: &Throughput,
) -> Result<KeyRateResult> {
    budget.validate()?;
    let n = budget.n_key();
    let big_n = budget.n_total;
    let delta_w = correction_delta_w(w, num_symbols)?;
    let delta_eps_bar = smoothing_delta(budget.eps_bar, rank, n)?;
    let ec_leak_per_n = ec_leak_bits / big_n;
    let pa_term = 2.0 / big_n * (1.0 / budget.eps_pa).log2();
    let n_over = n / big_n;
    let raw = n_over * (sdp_lb - delta_w - delta_eps_bar) - ec_leak_per_n - pa_term;
    let ell = raw.max(0.0);
    Ok(KeyRateResult {
        sdp_value,
        certified_lower_bound: sdp_lb,
        w,
        delta_w,
        delta_eps_bar,
        ec_leak_per_n,
        pa_term,
        n_over_n_total: n_over,
        ell_over_n_raw: raw,
        ell_over_n: ell,
        rate_bps: throughput.rate_bps(ell),
    })
}

/// Energy-test threshold and allowed exceedances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyTestPlan {
    /// Threshold on `|Y|²` (NU²).
    pub beta_test: f64,
    /// Upper bound on the single-round exceedance probability.
    pub p1: f64,
    pub l_t: u64,
}

/// Relative entropy `D(a‖p)` of Bernoulli laws in nats.
fn bernoulli_kl(a: f64, p: f64) -> f64 {
    let term = |x: f64, y: f64| if x <= 0.0 { 0.0 } else { x * (x / y).ln() };
    term(a, p) + term(1.0 - a, 1.0 - p)
}

/// Smallest `l` with the Chernoff bound on `Pr[Bin(m, p₁) > l]` at most `eps`.
pub fn chernoff_allowance(m: f64, p1: f64, eps: f64) -> u64 {
    if eps >= 1.0 || p1 <= 0.0 {
        return 0;
    }
    let bound = |l: f64| {
        let a = (l + 1.0) / m;
        if a >= 1.0 {
            0.0
        } else if a <= p1 {
            1.0
        } else {
            (-m * bernoulli_kl(a, p1)).exp()
        }
    };
    let mut lo = (m * p1).floor().max(0.0);
    let mut hi = m;
    if bound(lo) <= eps {
        return lo as u64;
    }
    while hi - lo > 1.0 {
        let mid = ((lo + hi) / 2.0).floor();
        if bound(mid) <= eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi as u64
}

/// Chooses `β_test` so the single-round exceedance under the expected Gaussian
/// output is at most `1e-7`, then `l_T` from the Chernoff bound.
pub fn energy_test_plan(c: &Constellation, ch: &ChannelParams, d: &DetectorModel, eps_et: f64, m: f64) -> Result<EnergyTestPlan> {
    if !(m >= 1.0) {
        return Err(domain("energy test needs at least one round"));
    }
    let v = ch.outcome_variance(d);
    let max_mean = (d.eta_d * ch.eta_t).sqrt() * c.max_amplitude();
    let p1 = 1e-7f64;
    // |Y|≥|μ|+r implies |Y−μ|≥r, whose probability is exp(−r²/V).
    let r = (v * (1.0 / p1).ln()).sqrt();
    let beta_test = (max_mean + r).powi(2);
    Ok(EnergyTestPlan { beta_test, p1, l_t: chernoff_allowance(m, p1, eps_et) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{Binomial, DiscreteCDF};

    #[test]
    fn weight_examples() {
        let p = [0.25; 4];
        assert_eq!(weight_w(&[(0.1, 0.1); 4], &p, 10, 0.0).unwrap(), 0.0);
        let s = 0.01;
        let mom = (s / 2.0, s * (s + 1.0) / 2.0);
        let w = weight_w(&[mom; 4], &p, 10, 0.0).unwrap();
        assert!((w - 0.005 * 0.01 / 110.0).abs() < 1e-15);
        assert!(weight_w(&[mom; 4], &p, 11, 0.0).unwrap() < w);
        assert!(matches!(weight_w(&[(0.2, 0.1); 4], &p, 10, 1e-6), Err(Error::DataInconsistency(_))));
    }

    #[test]
    fn delta_w_examples() {
        assert_eq!(correction_delta_w(0.0, 16).unwrap(), 0.0);
        let v = correction_delta_w(0.01, 16).unwrap();
        let x: f64 = 0.1 / 1.1;
        let h = -x * x.log2() - (1.0 - x) * (1.0 - x).log2();
        assert!((v - (0.4 + 1.1 * h)).abs() < 1e-12);
        assert!((v - 0.8834).abs() < 1e-3);
        let mut last = 0.0;
        for i in 1..50 {
            let d = correction_delta_w(i as f64 * 0.01, 16).unwrap();
            assert!(d > last);
            last = d;
        }
    }

    #[test]
    fn smoothing_example() {
        let v = smoothing_delta(1e-11, 16, 5.76e9).unwrap();
        assert!((v - 6.86e-4).abs() < 5e-6, "{v}");
        assert!(smoothing_delta(1e-11, 16, 1e30).unwrap() < 1e-12);
        assert!(smoothing_delta(1e-11, 16, 1e10).unwrap() < v);
        assert!(smoothing_delta(1e-13, 16, 5.76e9).unwrap() > v);
    }

    #[test]
    fn mu_example() {
        let v = acceptance_mu(10.0, 4e8, 7e-11).unwrap();
        assert!((v - (100.0 * (2.0f64 / 7e-11).ln() / 8e8).sqrt()).abs() < 1e-15);
        assert!((v - 1.7348e-3).abs() < 1e-7, "{v}");
        assert!(acceptance_mu(100.0, 4e8, 7e-11).unwrap() > v);
        assert!(acceptance_mu(10.0, 1e30, 7e-11).unwrap() < 1e-9);
    }

    #[test]
    fn composition() {
        let b = SecurityBudget::standard(1.28e10, 6.4e9, 10);
        assert!((b.total_epsilon() - 1e-10).abs() < 1e-24);
        b.validate().unwrap();
        let bad = SecurityBudget { m_test: 2e10, ..b };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn penalty_free_limit() {
        let b = SecurityBudget { eps_pa: 1.0 - 1e-16, eps_bar: 1.0 - 1e-16, ..SecurityBudget::standard(1e30, 1.0, 10) };
        let r = key_length(0.7, 0.7, &b, 0.0, 0.0, 16, 16, &Throughput::default()).unwrap();
        assert!((r.ell_over_n - 0.7).abs() < 1e-9);
        let z = key_length(0.0, 0.0, &SecurityBudget::standard(1e10, 1e9, 10), 1e3, 0.0, 16, 16, &Throughput::default()).unwrap();
        assert_eq!(z.ell_over_n, 0.0);
        assert!(z.ell_over_n_raw < 0.0);
        assert!((z.reassembled() - z.ell_over_n_raw).abs() < 1e-12);
    }

    #[test]
    fn allowance_limits() {
        assert_eq!(chernoff_allowance(1e6, 1e-7, 1.0), 0);
        assert_eq!(chernoff_allowance(1e6, 0.0, 1e-11), 0);
        let m = 6.4e9;
        assert!(chernoff_allowance(m, 1e-7, 1e-11) as f64 >= m * 1e-7);
    }

    #[test]
    fn allowance_bounds_binomial_tail() {
        let m = 1_000_000u64;
        let p = 1e-5;
        let eps = 1e-6;
        let l = chernoff_allowance(m as f64, p, eps);
        let bin = Binomial::new(p, m).unwrap();
        let tail = bin.sf(l);
        assert!(tail <= eps, "tail {tail} at l={l}");
    }

    proptest! {
        #[test]
        fn key_length_monotone(lb in 0.0f64..1.0, w in 0.0f64..1e-4, leak in 0.0f64..1e8) {
            let b = SecurityBudget::standard(1e10, 1e9, 10);
            let t = Throughput::default();
            let base = key_length(lb, lb, &b, leak, w, 16, 16, &t).unwrap();
            let more_lb = key_length(lb + 0.01, lb + 0.01, &b, leak, w, 16, 16, &t).unwrap();
            let more_w = key_length(lb, lb, &b, leak, w * 2.0 + 1e-9, 16, 16, &t).unwrap();
            let more_leak = key_length(lb, lb, &b, leak + 1e3, w, 16, 16, &t).unwrap();
            prop_assert!(more_lb.ell_over_n_raw >= base.ell_over_n_raw);
            prop_assert!(more_w.ell_over_n_raw <= base.ell_over_n_raw);
            prop_assert!(more_leak.ell_over_n_raw <= base.ell_over_n_raw);
            prop_assert!((base.reassembled() - base.ell_over_n_raw).abs() < 1e-12);
            prop_assert!(base.delta_w >= 0.0 && base.delta_eps_bar >= 0.0 && base.pa_term >= 0.0);
        }
    }
}
