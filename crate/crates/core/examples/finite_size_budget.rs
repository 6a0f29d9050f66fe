//! Finite-size correction terms for a range of block sizes.

use cvqkd::constellation::build_16qam;
use cvqkd::finite_size::{acceptance_mu, correction_delta_w, smoothing_delta, weight_w, SecurityBudget};

fn main() -> cvqkd::Result<()> {
    let c = build_16qam(0.2, 2.0)?;
    let cutoff = 10;
    let n = 2.5e-3;
    let n2 = 2.6e-3;
    println!("{:>8} {:>10} {:>10} {:>10} {:>10} {:>10}", "N", "k_T", "mu_n", "w", "delta_w", "delta_eps");
    for n_total in [1e8, 1e9, 1e10, 1e11] {
        let b = SecurityBudget::with_test_ratio(n_total, 0.1, cutoff);
        let k_t = b.k_t(&c.probabilities);
        let mu = acceptance_mu(cutoff as f64, k_t, b.eps_at)?;
        let moments = vec![(n, n2); c.len()];
        let w = weight_w(&moments, &c.probabilities, cutoff, 0.0)?;
        let dw = correction_delta_w(w, c.len())?;
        let de = smoothing_delta(b.eps_bar, 4 * (cutoff + 1), b.n_key())?;
        println!("{n_total:>8.0e} {k_t:>10.3e} {mu:>10.3e} {w:>10.3e} {dw:>10.3e} {de:>10.3e}");
    }
    let b = SecurityBudget::standard(1e10, 1e9, cutoff);
    println!("total security parameter {:.2e}", b.total_epsilon());
    Ok(())
}
