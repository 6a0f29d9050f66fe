//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. The full-cutoff 16QAM points dominate the
//! runtime (a few minutes each on one core).

use std::time::Instant;

use cvqkd::channel::{analytic_moments, ChannelParams};
use cvqkd::constellation::{build_16qam, build_qpsk, Modulation};
use cvqkd::detector::{key_map, DetectorModel, KeyMapGeometry};
use cvqkd::estimation::displaced_moments_from_samples;
use cvqkd::finite_size::SecurityBudget;
use cvqkd::fock::FockSpace;
use cvqkd::keyrate::{evaluate, KeyRateConfig, KeyRateReport, MomentSource};
use cvqkd::linalg::{self, C64};
use cvqkd::region::{povm_completeness_defect, region_operator_set, QuadratureRule};
use cvqkd::scan::{run_scan, write_csv, RunConfig};
use cvqkd::sdp::{
    build_problem, certify_lower_bound, objective, objective_and_gradient, solve_primal, MomentBounds, EPS_PERT,
};
use cvqkd::sim::{simulate, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: &str, name: &str, o: &Outcome, failures: &mut usize) {
    println!("[{}] {id} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    if !o.pass {
        *failures += 1;
    }
}

#[allow(clippy::too_many_arguments)]
fn qam_rate(v_a: f64, dist_km: f64, xi: f64, eta_d: f64, nu_el: f64, delta0: f64, n_total: f64) -> KeyRateReport {
    let ch = ChannelParams::from_distance(dist_km, 0.2, xi).unwrap();
    let d = DetectorModel::new(eta_d, nu_el).unwrap();
    let mut cfg = KeyRateConfig::new(Modulation::Qam16, v_a, ch, d, n_total, 10);
    cfg.delta0_nu = delta0;
    cfg.fw.max_iters = 20;
    timed(&format!("16QAM V_A={v_a} L={dist_km} Δ0={delta0} N={n_total:.0e} η_d={eta_d}"), || {
        evaluate(&cfg, &MomentSource::Analytic, None).unwrap()
    })
}

fn timed<T>(what: &str, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let v = f();
    eprintln!("  {what}: {:.0} s", t.elapsed().as_secs_f64());
    v
}

fn mbps(r: &KeyRateReport) -> f64 {
    r.result.rate_bps / 1e6
}

fn operating_point() -> Outcome {
    let ch = ChannelParams::from_transmittance(0.3465, 0.0083, 0.2).unwrap();
    let d = DetectorModel::new(0.714, 0.0883).unwrap();
    let mut cfg = KeyRateConfig::new(Modulation::Qam16, 2.03, ch, d, 1.28e10, 10);
    cfg.shaping_nu = 0.2;
    cfg.delta0_nu = 0.35;
    cfg.budget = SecurityBudget::standard(1.28e10, 6.4e9, 10);
    cfg.fw.max_iters = 20;
    let r = timed("operating point", || evaluate(&cfg, &MomentSource::Analytic, None).unwrap());
    let rate = mbps(&r);
    let rel = rate / 18.93 - 1.0;
    Outcome {
        pass: rel.abs() <= 0.2,
        detail: format!(
            "{rate:.2} Mbps vs 18.93 ({:+.1}%), certified {:.4} bits, FW gap {:.1e}",
            100.0 * rel,
            r.result.certified_lower_bound,
            r.fw_gap
        ),
    }
}

fn post_selection_gain(base: &KeyRateReport) -> Outcome {
    let with = qam_rate(2.0, 25.0, 0.01, 0.7, 0.08, 0.35, 1e10);
    let (a, b) = (mbps(base), mbps(&with));
    let gain = if a > 0.0 { b / a } else if b > 0.0 { f64::INFINITY } else { 0.0 };
    Outcome { pass: gain >= 1.8, detail: format!("{b:.3} / {a:.3} Mbps = {gain:.2} (need ≥ 1.8)") }
}

fn optimal_variance(base: &KeyRateReport) -> Outcome {
    let grid = [1.6, 1.8, 2.0, 2.2, 2.4];
    let rates: Vec<f64> = grid
        .iter()
        .map(|&v| if v == 2.0 { mbps(base) } else { mbps(&qam_rate(v, 25.0, 0.01, 0.7, 0.08, 0.0, 1e10)) })
        .collect();
    let best = rates.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).map(|(i, _)| grid[i]).unwrap();
    let listing: Vec<String> = grid.iter().zip(&rates).map(|(v, r)| format!("{v}:{r:.3}")).collect();
    Outcome {
        pass: (1.8..=2.2).contains(&best) && rates.iter().any(|&r| r > 0.0),
        detail: format!("argmax V_A = {best} SNU [{}] Mbps", listing.join(" ")),
    }
}

fn cutoff_distance() -> Outcome {
    let r15 = mbps(&qam_rate(2.0, 15.0, 0.01, 1.0, 0.0, 0.0, 1e9));
    let r21 = mbps(&qam_rate(2.0, 21.0, 0.01, 1.0, 0.0, 0.0, 1e9));
    let r22 = mbps(&qam_rate(2.0, 22.0, 0.01, 1.0, 0.0, 0.0, 1e9));
    Outcome {
        pass: r15 > 0.0 && r21 == 0.0 && r22 == 0.0,
        detail: format!("15 km {r15:.3}, 21 km {r21:.3}, 22 km {r22:.3} Mbps"),
    }
}

fn qpsk_gap() -> Outcome {
    let qam = mbps(&qam_rate(2.0, 10.0, 0.01, 1.0, 0.0, 0.0, 1e10));
    let ch = ChannelParams::from_distance(10.0, 0.2, 0.01).unwrap();
    let cfg = KeyRateConfig::new(Modulation::Qpsk, 0.49, ch, DetectorModel::ideal(), 1e10, 10);
    let qpsk = mbps(&timed("QPSK 10 km", || evaluate(&cfg, &MomentSource::Analytic, None).unwrap()));
    let ratio = qam / qpsk;
    Outcome { pass: ratio >= 4.0, detail: format!("16QAM {qam:.2} / QPSK {qpsk:.2} Mbps = {ratio:.2} (need ≥ 4)") }
}

fn completeness() -> Outcome {
    let c = build_16qam(0.2, 2.0).unwrap();
    let ch = ChannelParams::from_distance(20.0, 0.2, 0.01).unwrap();
    let d = DetectorModel::ideal();
    let g = KeyMapGeometry::for_channel(&c, ch.eta_t, &d, 0.0).unwrap();
    let set = region_operator_set(&c.received(ch.eta_t), &d, &g, FockSpace::new(10).unwrap(), &QuadratureRule::default()).unwrap();
    let defect = povm_completeness_defect(&set).unwrap();
    Outcome { pass: defect < 1e-3, detail: format!("defect {defect:.2e}") }
}

fn qpsk_problem(cutoff: usize, w: f64, mu: f64) -> cvqkd::sdp::KeyRateProblem {
    let c = build_qpsk(0.49).unwrap();
    let ch = ChannelParams::from_distance(10.0, 0.2, 0.01).unwrap();
    let d = DetectorModel::ideal();
    let g = KeyMapGeometry::for_channel(&c, ch.eta_t, &d, 0.0).unwrap();
    let space = FockSpace::new(cutoff).unwrap();
    let set = region_operator_set(&c.received(ch.eta_t), &d, &g, space, &QuadratureRule::default()).unwrap();
    let (n, n2) = analytic_moments(&ch);
    let p = build_problem(&c, &MomentBounds::uniform(n, n2, mu, mu * cutoff as f64, cutoff, 4), w, &set).unwrap();
    p.with_initial(cvqkd::channel::honest_state(&c, &ch, space)).unwrap()
}

fn gradient_check() -> Outcome {
    let p = qpsk_problem(4, 0.0, 0.0);
    let dim = p.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let white = linalg::scale(&linalg::identity(dim), 1.0 / dim as f64);
    let rho = linalg::add(&linalg::scale(&p.initial, 0.9), &linalg::scale(&white, 0.1));
    let (_, grad) = objective_and_gradient(&p, &rho, EPS_PERT).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..10 {
        // Trace-free Hermitian direction, so ρ ± tD stays a state.
        let a = linalg::CMat::from_fn(dim, dim, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let mut h = linalg::scale(&linalg::add(&a, &a.adjoint().to_owned()), 0.5);
        let tr = linalg::trace(&h).re / dim as f64;
        for i in 0..dim {
            h[(i, i)] -= C64::new(tr, 0.0);
        }
        let h = linalg::scale(&h, 1.0 / linalg::frobenius(&h));
        let t = 1e-5;
        let fp = objective(&p, &linalg::add_scaled(&rho, t, &h), EPS_PERT).unwrap();
        let fm = objective(&p, &linalg::add_scaled(&rho, -t, &h), EPS_PERT).unwrap();
        let fd = (fp - fm) / (2.0 * t);
        let an = linalg::inner(&grad, &h);
        worst = worst.max((fd - an).abs() / an.abs().max(1e-8));
    }
    Outcome { pass: worst < 1e-4, detail: format!("max relative error {worst:.1e} over 10 directions") }
}

fn certificate_and_monotonicity() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (cutoff, w, mu) in [(4, 0.0, 0.0), (5, 1e-5, 1e-3), (6, 1e-4, 5e-3)] {
        let p = qpsk_problem(cutoff, w, mu);
        let it = solve_primal(&p, 15, 1e-7).unwrap();
        let cert = certify_lower_bound(&p, &it).unwrap();
        let monotone = it.history.windows(2).all(|x| x[1] <= x[0] + 1e-12);
        ok &= monotone && cert.certified_bits <= it.objective;
        notes.push(format!("N_c={cutoff}: {:.5} ≤ {:.5}", cert.certified_bits, it.objective));
    }
    Outcome { pass: ok, detail: format!("{}; FW histories non-increasing", notes.join(", ")) }
}

fn estimation_pipeline() -> Outcome {
    let c = build_qpsk(0.49).unwrap();
    let ch = ChannelParams::from_distance(10.0, 0.2, 0.01).unwrap();
    let d = DetectorModel::new(0.7, 0.08).unwrap();
    let g = KeyMapGeometry::for_channel(&c, ch.eta_t, &d, 0.0).unwrap();
    let cfg = SimConfig { constellation: c, channel: ch, detector: d, geometry: g, rounds: 1_000_000, seed: 5, test_fraction: 0.999 };
    let out = simulate(&cfg).unwrap();
    let est = displaced_moments_from_samples(&out.test_samples(), &d).unwrap();
    let (n, n2) = analytic_moments(&ch);
    let worst = est.iter().map(|m| ((m.n - n) / m.se_n).abs().max(((m.n2 - n2) / m.se_n2).abs())).fold(0.0, f64::max);
    Outcome { pass: worst <= 3.0, detail: format!("largest deviation {worst:.2}σ over 4 states × 2 moments") }
}

/// Independent nearest-level classifier on each axis.
fn classify(y: C64, g: &KeyMapGeometry) -> Option<usize> {
    if y.re.abs() < g.delta || y.im.abs() < g.delta || y.norm() > g.range_m {
        return None;
    }
    let axis = |v: f64| {
        let levels = [3.0, 1.0, -1.0, -3.0];
        (0..4).min_by(|&a, &b| (v - levels[a] * g.alpha0).abs().partial_cmp(&(v - levels[b] * g.alpha0).abs()).unwrap()).unwrap()
    };
    Some(axis(y.im) * 4 + axis(y.re))
}

fn key_map_oracle() -> Outcome {
    let g = KeyMapGeometry::new(Modulation::Qam16, 0.6, 0.15, 4.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let y = C64::new(rng.random_range(-4.5..4.5), rng.random_range(-4.5..4.5));
        if key_map(y, &g) != classify(y, &g) {
            mismatches += 1;
        }
    }
    Outcome { pass: mismatches == 0, detail: format!("{mismatches} mismatches in 10^4 points") }
}

fn determinism() -> Outcome {
    let c = build_qpsk(0.49).unwrap();
    let ch = ChannelParams::from_distance(10.0, 0.2, 0.01).unwrap();
    let d = DetectorModel::new(0.7, 0.08).unwrap();
    let g = KeyMapGeometry::for_channel(&c, ch.eta_t, &d, 0.0).unwrap();
    let cfg = SimConfig { constellation: c, channel: ch, detector: d, geometry: g, rounds: 300_000, seed: 42, test_fraction: 0.1 };
    let bytes = |cfg: &SimConfig| {
        let mut buf = Vec::new();
        simulate(cfg).unwrap().samples.write_binary_to(&mut buf).unwrap();
        buf
    };
    let sim_same = bytes(&cfg) == bytes(&cfg);

    let run = RunConfig::from_json(r#"{ "protocol": "qpsk", "v_a_snu": 0.49, "cutoff": 3, "fw_max_iters": 4, "sweep": { "distance_km": [5.0, 10.0] } }"#).unwrap();
    let csv = || {
        let mut buf = Vec::new();
        write_csv(&run, &run_scan(&run).unwrap(), &mut buf).unwrap();
        String::from_utf8(buf).unwrap().lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect::<Vec<_>>()
    };
    let csv_same = csv() == csv();
    Outcome { pass: sim_same && csv_same, detail: format!("simulation bytes identical: {sim_same}, CSV identical: {csv_same}") }
}

fn main() {
    let mut failures = 0;
    let t = Instant::now();
    report("6a", "POVM completeness", &completeness(), &mut failures);
    report("6b", "objective gradient", &gradient_check(), &mut failures);
    report("6c", "certificate and FW monotonicity", &certificate_and_monotonicity(), &mut failures);
    report("6d", "moment estimation from simulation", &estimation_pipeline(), &mut failures);
    report("6e", "key-map membership", &key_map_oracle(), &mut failures);
    report("6f", "determinism", &determinism(), &mut failures);

    report("1", "16QAM operating point at 18.93 Mbps", &operating_point(), &mut failures);
    let base = qam_rate(2.0, 25.0, 0.01, 0.7, 0.08, 0.0, 1e10);
    report("2", "post-selection gain at 25 km", &post_selection_gain(&base), &mut failures);
    report("3", "optimal modulation variance at 25 km", &optimal_variance(&base), &mut failures);
    report("4", "cutoff distance at N = 1e9", &cutoff_distance(), &mut failures);
    report("5", "16QAM over QPSK at 10 km", &qpsk_gap(), &mut failures);
    println!("{failures} failing criteria, {:.0} s total", t.elapsed().as_secs_f64());
    if failures > 0 {
        std::process::exit(1);
    }
}
