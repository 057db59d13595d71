//! Simulate count series from a periodic model and fit it back by maximum likelihood.

use phmm::estimate::{fit, FitOptions};
use phmm::hmm::{simulate, EmissionSpec, HmmModel};
use phmm::presets;

fn main() -> phmm::Result<()> {
    let emissions = EmissionSpec::negative_binomial(vec![2.0, 20.0], vec![1.5, 3.0])?;
    let truth = HmmModel::with_link(presets::dwell_means_example(), emissions)?;
    let data = (0..15)
        .map(|k| simulate(&truth, 480, 1, k).map(|s| s.series))
        .collect::<phmm::Result<Vec<_>>>()?;

    let result = fit(&data, &truth, &FitOptions::default())?;
    println!(
        "{:?}, log-likelihood {:.3}",
        result.convergence, result.log_likelihood
    );
    let se = result.standard_errors().unwrap_or_default();
    let truth_params = phmm::estimate::WorkingParams::from_model(&truth)?;
    println!(
        "{:<20} {:>9} {:>9} {:>9}",
        "parameter", "truth", "estimate", "s.e."
    );
    for (k, name) in result.parameter_names().iter().enumerate() {
        println!(
            "{name:<20} {:>9.3} {:>9.3} {:>9.3}",
            truth_params.0[k],
            result.working.0[k],
            se.get(k).copied().unwrap_or(f64::NAN)
        );
    }

    let homogeneous = fit(&data, &truth.homogeneous(), &FitOptions::default())?;
    println!(
        "\nhomogeneous fit: log-likelihood {:.3} with {} parameters",
        homogeneous.log_likelihood,
        homogeneous.n_parameters()
    );
    Ok(())
}
