//! Honest-channel statistics: photon-number moments, P(Z|X), entropies and
//! error-correction leakage.

use cvqkd::channel::{analytic_moments, conditional_distribution, ec_leakage, ChannelParams};
use cvqkd::constellation::build_16qam;
use cvqkd::detector::{DetectorModel, KeyMapGeometry};

fn main() -> cvqkd::Result<()> {
    let c = build_16qam(0.2, 2.0)?;
    let d = DetectorModel::new(0.7, 0.08)?;
    println!("{:>6} {:>8} {:>10} {:>10} {:>7} {:>7} {:>8} {:>12}", "L km", "eta_t", "<n>", "<n^2>", "p_pass", "H(Z)", "H(Z|X)", "leak/N");
    for dist in [5.0, 15.0, 25.0, 40.0] {
        let ch = ChannelParams::from_distance(dist, 0.2, 0.01)?;
        let (n, n2) = analytic_moments(&ch);
        let g = KeyMapGeometry::for_channel(&c, ch.eta_t, &d, 0.2)?;
        let dist_z = conditional_distribution(&c, &ch, &d, &g);
        let (hz, hzx) = dist_z.post_selected_entropies(&c.probabilities);
        let nk = 9e9;
        let leak = ec_leakage(&dist_z, &c.probabilities, nk, 0.95, 2e-11)? / 1e10;
        println!("{dist:>6.1} {:>8.4} {n:>10.3e} {n2:>10.3e} {:>7.4} {hz:>7.4} {hzx:>8.4} {leak:>12.6}", ch.eta_t, dist_z.p_pass);
    }
    Ok(())
}
