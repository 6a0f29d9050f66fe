//! The 16QAM operating point at 20 km with N = 1e10 and trusted detector noise.
//! Full cutoff; expect a few minutes on one core.

use cvqkd::channel::ChannelParams;
use cvqkd::constellation::Modulation;
use cvqkd::detector::DetectorModel;
use cvqkd::keyrate::{evaluate, KeyRateConfig, MomentSource};

fn main() -> cvqkd::Result<()> {
    let ch = ChannelParams::from_distance(20.0, 0.2, 0.01)?;
    let d = DetectorModel::new(0.7, 0.08)?;
    let mut cfg = KeyRateConfig::new(Modulation::Qam16, 2.0, ch, d, 1e10, 10);
    cfg.delta0_nu = 0.0;
    cfg.fw.max_iters = 20;
    let r = evaluate(&cfg, &MomentSource::Analytic, None)?;
    println!("{}", serde_json::to_string_pretty(&r).expect("report serialises"));
    println!("secret key rate {:.2} Mbps", r.result.rate_bps / 1e6);
    Ok(())
}
