//! Region operators of the 16QAM key map in each state's displaced basis,
//! for an ideal and a trusted-noise detector.

use cvqkd::channel::ChannelParams;
use cvqkd::constellation::build_16qam;
use cvqkd::detector::{DetectorModel, KeyMapGeometry};
use cvqkd::fock::FockSpace;
use cvqkd::linalg;
use cvqkd::region::{povm_completeness_defect, region_operator_set, QuadratureRule};

fn main() -> cvqkd::Result<()> {
    let c = build_16qam(0.2, 2.0)?;
    let ch = ChannelParams::from_distance(20.0, 0.2, 0.01)?;
    let space = FockSpace::new(8)?;
    for (label, d) in [("ideal", DetectorModel::ideal()), ("trusted", DetectorModel::new(0.7, 0.08)?)] {
        for delta0 in [0.0, 0.2] {
            let g = KeyMapGeometry::for_channel(&c, ch.eta_t, &d, delta0)?;
            let set = region_operator_set(&c.received(ch.eta_t), &d, &g, space, &QuadratureRule::default())?;
            let pass = set.pass_operator(0);
            let mass = linalg::trace(&pass).re / space.dim() as f64;
            print!("{label:<8} delta0={delta0:.1}  min eig {:+.2e}  mean diag of sum {mass:.4}", set.min_eigenvalue()?);
            if delta0 == 0.0 {
                print!("  completeness defect {:.2e}", povm_completeness_defect(&set)?);
            }
            println!("  quadrature error {:.1e}", set.est_error);
        }
    }
    Ok(())
}
