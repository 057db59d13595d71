//! Time-varying and overall dwell-time distributions.
//!
//! The overall distribution of state 2 in this chain has more than one mode, which a
//! homogeneous (geometric) model cannot produce.

use phmm::dwell::{dwell_pmf_at, dwell_pmf_overall, mixture_weights};
use phmm::presets;
use phmm::stationary::stationary_exact;

fn main() -> phmm::Result<()> {
    let tpm = presets::multimodal_dwell_example().build_tpm();
    let state = 1;

    let delta = stationary_exact(&tpm)?;
    let weights = mixture_weights(&tpm, &delta, state)?;
    println!("entry-time weights of state 2:");
    for (t, w) in weights.weights.iter().enumerate() {
        println!("  t = {:>2}: {w:.4}", t + 1);
    }

    let overall = dwell_pmf_overall(&tpm, state, None)?;
    println!(
        "\noverall pmf (support 1..={}, tail {:.1e}):",
        overall.support_max(),
        overall.tail_mass
    );
    for r in 1..=72 {
        let bar = "#".repeat((overall.prob(r) * 600.0).round() as usize);
        println!("  r = {r:>3} {:.4} {bar}", overall.prob(r));
    }
    if let Some(r) = overall.first_increase() {
        println!("\nnot monotone: d({}) > d({r})", r + 1);
    }

    let at_6 = dwell_pmf_at(&tpm, state, 6, 48)?;
    println!(
        "\nstay entered at t = 6, first 10 probabilities: {:.3?}",
        &at_6.pmf[..10]
    );
    Ok(())
}
