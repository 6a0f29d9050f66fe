//! Monte Carlo protocol rounds, then parameter estimation and the energy and
//! acceptance tests on the test subset.

use cvqkd::channel::{analytic_moments, ChannelParams};
use cvqkd::constellation::build_qpsk;
use cvqkd::detector::{DetectorModel, KeyMapGeometry};
use cvqkd::estimation::{displaced_moments_from_samples, estimate_t_xi, worst_case};
use cvqkd::finite_size::energy_test_plan;
use cvqkd::sdp::MomentBounds;
use cvqkd::sim::{acceptance_test, energy_test, simulate, SimConfig};

fn main() -> cvqkd::Result<()> {
    let c = build_qpsk(0.49)?;
    let ch = ChannelParams::from_distance(10.0, 0.2, 0.01)?;
    let d = DetectorModel::new(0.7, 0.08)?;
    let g = KeyMapGeometry::for_channel(&c, ch.eta_t, &d, 0.0)?;
    let cfg = SimConfig { constellation: c.clone(), channel: ch, detector: d, geometry: g, rounds: 2_000_000, seed: 11, test_fraction: 0.5 };
    let out = simulate(&cfg)?;
    let test = out.test_samples();
    println!("{} rounds, {} for testing, p_pass {:.4}", cfg.rounds, test.len(), out.key.p_pass);

    let (t, xi) = estimate_t_xi(&test, &c, &d)?;
    let wc = worst_case(t, xi, 1e-10, &d, c.modulation_variance, test.len() as f64 / 4.0)?;
    println!("T  = {t:.5} (true {:.5}), worst case {:.5}", ch.eta_t, wc.t_wc);
    println!("xi = {xi:.5} (true {:.5}), worst case {:.5}", ch.xi, wc.xi_wc);

    let est = displaced_moments_from_samples(&test, &d)?;
    let (n, n2) = analytic_moments(&ch);
    for (k, m) in est.iter().enumerate() {
        println!("state {k}: <n> {:.5} ± {:.5}   <n^2> {:.5} ± {:.5}", m.n, m.se_n, m.n2, m.se_n2);
    }
    println!("model: <n> {n:.5}  <n^2> {n2:.5}");

    let plan = energy_test_plan(&c, &ch, &d, 1e-11, test.len() as f64)?;
    let energy = energy_test(&test.records, plan.beta_test, plan.l_t);
    println!("energy test: {} exceedances of {:.2}, allowed {} -> {}", energy.exceedances, plan.beta_test, plan.l_t, energy.pass);

    let mu: Vec<MomentBounds> = est.iter().map(|m| MomentBounds { n, n2, mu_n: 5.0 * m.se_n, mu_n2: 5.0 * m.se_n2, norm_n: 1.0, norm_n2: 1.0 }).collect();
    let acc = acceptance_test(&est, &mu, 0.0)?;
    println!("acceptance test: {}", acc.pass);
    Ok(())
}
