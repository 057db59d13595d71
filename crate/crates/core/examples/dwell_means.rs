//! Expected dwell time as a function of the entry time, plus the overall mean.

use phmm::dwell::{dwell_mean_overall, dwell_means};
use phmm::presets;

fn main() -> phmm::Result<()> {
    let tpm = presets::dwell_means_example().build_tpm();
    let means: Vec<Vec<f64>> = (0..2)
        .map(|i| dwell_means(&tpm, i))
        .collect::<phmm::Result<_>>()?;
    println!("{:>4} {:>10} {:>10}", "t", "state 1", "state 2");
    for (t, (a, b)) in means[0].iter().zip(&means[1]).enumerate() {
        println!("{:>4} {a:>10.3} {b:>10.3}", t + 1);
    }
    for i in 0..2 {
        println!(
            "overall mean, state {}: {:.3}",
            i + 1,
            dwell_mean_overall(&tpm, i)?
        );
    }
    Ok(())
}
