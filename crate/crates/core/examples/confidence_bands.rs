//! Pointwise Monte Carlo bands for the stationary distribution and mean dwell times.

use phmm::estimate::{fit, mc_confidence, FitOptions, Functional};
use phmm::hmm::{simulate, EmissionSpec, HmmModel};
use phmm::presets;
use phmm::stationary::stationary_exact;

fn main() -> phmm::Result<()> {
    let emissions = EmissionSpec::negative_binomial(vec![2.0, 20.0], vec![1.5, 3.0])?;
    let truth = HmmModel::with_link(presets::dwell_means_example(), emissions)?;
    let data = (0..15)
        .map(|k| simulate(&truth, 480, 1, 100 + k).map(|s| s.series))
        .collect::<phmm::Result<Vec<_>>>()?;
    let result = fit(&data, &truth, &FitOptions::default())?;

    let true_delta = stationary_exact(&truth.tpm(None)?)?;
    let delta = mc_confidence(
        &result,
        &Functional::Delta {
            condition: None,
            state: 0,
        },
        1000,
        0.95,
        7,
    )?;
    let means = mc_confidence(
        &result,
        &Functional::DwellMean {
            condition: None,
            state: 0,
        },
        1000,
        0.95,
        7,
    )?;
    println!(
        "{:>4} {:>8} {:>20} {:>8} {:>20}",
        "t", "delta1", "95% band", "mean1", "95% band"
    );
    for t in 0..24 {
        println!(
            "{:>4} {:>8.3} [{:>7.3}, {:>7.3}]{} {:>8.3} [{:>7.3}, {:>7.3}]",
            t + 1,
            delta.estimate[t],
            delta.lower[t],
            delta.upper[t],
            if (delta.lower[t]..=delta.upper[t]).contains(&true_delta.probs()[t][0]) {
                " "
            } else {
                "*"
            },
            means.estimate[t],
            means.lower[t],
            means.upper[t],
        );
    }
    println!("(* marks positions where the true delta lies outside the band)");
    Ok(())
}
