//! Exact periodically stationary distribution versus the per-time "hypothetical" one.
//!
//! Prints `delta_1(t)`, `rho_1(t)` and simulated frequencies for the three published
//! two-state scenarios.
//!
//! ```text
//! cargo run --example periodic_stationary
//! ```

use phmm::presets;
use phmm::stationary::{empirical_state_frequencies, stationary_exact, stationary_hypothetical};

fn main() -> phmm::Result<()> {
    let scenarios = [
        ("scenario 1", presets::scenario_1()),
        ("scenario 2", presets::scenario_2()),
        ("scenario 3", presets::scenario_3()),
    ];
    for (name, spec) in scenarios {
        let tpm = spec.build_tpm();
        let delta = stationary_exact(&tpm)?;
        let rho = stationary_hypothetical(&tpm)?;
        let sim = empirical_state_frequencies(&tpm, 1000, 1)?;
        println!("{name}");
        println!("{:>4} {:>8} {:>8} {:>8}", "t", "delta1", "rho1", "sim1");
        for t in 1..=tpm.period() as i64 {
            println!(
                "{t:>4} {:>8.4} {:>8.4} {:>8.4}",
                delta.at(t)[0],
                rho.at(t)[0],
                sim.at(t)[0]
            );
        }
        println!("max |delta - sim| = {:.4}\n", delta.max_abs_diff(&sim));
    }
    Ok(())
}
