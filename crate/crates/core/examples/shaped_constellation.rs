//! 16QAM with Gibbs shaping versus uniform QPSK at the same modulation variance.

use cvqkd::constellation::{build_16qam, build_qpsk, tau_a};

fn main() -> cvqkd::Result<()> {
    let v_a = 2.0;
    for nu in [0.05, 0.2, 0.6] {
        let c = build_16qam(nu, v_a)?;
        let tau = tau_a(&c);
        let eig = tau.eigenvalues()?;
        let largest = eig.iter().cloned().fold(f64::MIN, f64::max);
        println!(
            "16QAM nu={nu:<4}  P(inner)={:.4}  P(corner)={:.4}  V_A={:.6}  max|alpha|={:.3}  tau_A top eigenvalue {largest:.4}",
            c.probabilities[5],
            c.probabilities[0],
            c.reconstructed_variance(),
            c.max_amplitude(),
        );
    }
    let q = build_qpsk(v_a)?;
    let pts: Vec<String> = q.points.iter().map(|p| format!("({:+.3}, {:+.3})", p.value().re, p.value().im)).collect();
    println!("QPSK            points {}", pts.join(" "));
    Ok(())
}
