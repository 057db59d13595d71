//! Survival of a stay is memoryless at lags that are whole cycles, but not in between.

use phmm::dwell::survival;
use phmm::presets;

fn main() -> phmm::Result<()> {
    let tpm = presets::multimodal_dwell_example().build_tpm();
    let l = tpm.period();
    let state = 1;
    let after_cycle = survival(&tpm, state, None, l)?;
    let after_half = survival(&tpm, state, None, l / 2)?;
    println!(
        "{:>4} {:>14} {:>20} {:>20}",
        "s", "P(R > s)", "P(R > L+s | R > L)", "P(R > L/2+s | R > L/2)"
    );
    for s in [1, 3, 6, 12, 24, 36, 48] {
        println!(
            "{s:>4} {:>14.8} {:>20.8} {:>20.8}",
            survival(&tpm, state, None, s)?,
            survival(&tpm, state, None, l + s)? / after_cycle,
            survival(&tpm, state, None, l / 2 + s)? / after_half,
        );
    }
    Ok(())
}
