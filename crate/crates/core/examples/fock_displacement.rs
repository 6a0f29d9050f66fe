//! Truncated Fock-space tools: coherent states, displacements and the
//! displaced number operators that carry the photon-number constraints.

use cvqkd::fock::{
    coherent_state_vector, displaced_observables, displacement_closed_form, displacement_elements, overlap, truncation_deficit,
    CoherentAmplitude, FockSpace,
};

fn main() -> cvqkd::Result<()> {
    let space = FockSpace::new(12)?;
    let alpha = CoherentAmplitude::new(0.8, -0.3);

    let psi = coherent_state_vector(space, alpha);
    let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
    println!("|alpha> in {} levels: norm {norm:.12}, lost mass {:.3e}", space.dim(), truncation_deficit(space, alpha));

    let beta = CoherentAmplitude::new(0.2, 0.4);
    println!("<alpha|beta> = {:.6}", overlap(alpha, beta));

    let exact = displacement_closed_form(space, alpha.value());
    let padded = displacement_elements(space, alpha.value());
    let mut worst = 0.0f64;
    for m in 0..space.dim() {
        for n in 0..space.dim() {
            worst = worst.max((exact[(m, n)] - padded[(m, n)]).norm());
        }
    }
    println!("Laguerre form vs padded exponential: max diff {worst:.2e}");
    println!("<3|D(alpha)|1> = {:.6}", exact[(3, 1)]);

    let obs = displaced_observables(space, alpha)?;
    let vac_n = obs.n.expectation(&coherent_state_vector(space, CoherentAmplitude::new(0.0, 0.0)));
    println!("<0|n_alpha|0> = {:.6} (|alpha|^2 = {:.6})", vac_n.re, alpha.mean_photon_number());
    println!("sup-norms: n {:.3}, n^2 {:.3}", obs.norm_n, obs.norm_n2);
    Ok(())
}
