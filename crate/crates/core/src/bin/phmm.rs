use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use phmm::check::{dwell_check, DwellComparison};
use phmm::dwell::{self, default_r_max};
use phmm::estimate::{fit, mc_confidence, FitOptions, FitResult, FitStatus, Functional};
use phmm::hmm::{simulate_condition, HmmModel, Simulation};
use phmm::io::{self, MeanRow};
use phmm::stationary::{empirical_state_frequencies, stationary_exact, stationary_hypothetical};
use phmm::{Error, PeriodicTpm, Result, TrigLinkSpec};

/// Periodic hidden Markov models: simulation, fitting and summaries.
///
/// Set PHMM_THREADS to cap the number of worker threads.
#[derive(Parser)]
#[command(name = "phmm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate states and counts; writes simulated.csv and model.json.
    Simulate(Opts),
    /// Fit a model template to count data; writes fit.json and fitted_model.json.
    Fit(Opts),
    /// Periodically stationary and hypothetical distributions; writes stationary.csv.
    Stationary(Opts),
    /// Time-varying and overall dwell-time pmfs and means; writes dwell_pmf.csv and dwell_means.csv.
    Dwell(Opts),
    /// Compare analytic dwell pmfs with those of decoded state sequences.
    Check(Opts),
    /// Run the dwell check for two models on the same data.
    Compare(Opts),
}

#[derive(Args)]
struct Opts {
    /// Model JSON (for stationary and dwell a bare link specification also works).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Count CSV with columns id, phase, count[, condition].
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Cycles to simulate per series.
    #[arg(long)]
    n_cycles: Option<usize>,
    /// Series to simulate per condition.
    #[arg(long, default_value_t = 1)]
    n_series: usize,
    /// Truncation of dwell-time supports (default: 1e-12 tail rule).
    #[arg(long)]
    r_max: Option<usize>,
    /// Sampled state sequences for the dwell check.
    #[arg(long, default_value_t = 1000)]
    n_seq: usize,
    /// Level of Monte Carlo confidence bands.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Drop all harmonics from the model before use.
    #[arg(long)]
    homogeneous: bool,
    /// Fit report JSON; enables confidence bands for stationary and dwell.
    #[arg(long)]
    fit: Option<PathBuf>,
    /// Parameter draws for confidence bands.
    #[arg(long, default_value_t = 1000)]
    n_draws: usize,
    /// Second model for `compare`.
    #[arg(long)]
    against: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    max_iterations: usize,
}

impl Opts {
    fn model_path(&self) -> Result<&Path> {
        self.model
            .as_deref()
            .ok_or_else(|| usage("--model is required"))
    }

    fn data_path(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| usage("--data is required"))
    }

    fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| usage("--seed is required for stochastic commands"))
    }

    fn output(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out).map_err(|source| Error::Io {
            path: self.out.clone(),
            source,
        })?;
        Ok(self.out.join(name))
    }

    fn hmm(&self) -> Result<HmmModel> {
        let model: HmmModel = io::read_json(self.model_path()?)?;
        Ok(if self.homogeneous {
            model.homogeneous()
        } else {
            model
        })
    }

    /// Every state process of the model, or the bare link, keyed by condition.
    fn chains(&self) -> Result<Vec<(Option<String>, PeriodicTpm)>> {
        let path = self.model_path()?;
        if let Ok(model) = self.hmm() {
            let single = model.processes().len() == 1;
            return model
                .conditions()
                .map(|c| {
                    let tpm = model.tpm(Some(c))?;
                    Ok(((!single).then(|| c.to_string()), tpm))
                })
                .collect();
        }
        let link: TrigLinkSpec = io::read_json(path)?;
        let link = if self.homogeneous {
            link.homogeneous()
        } else {
            link
        };
        Ok(vec![(None, link.build_tpm())])
    }

    fn fitted(&self) -> Result<Option<FitResult>> {
        self.fit.as_deref().map(io::read_json).transpose()
    }
}

fn usage(message: &str) -> Error {
    Error::Argument(message.to_string())
}

fn suffix(condition: &Option<String>) -> String {
    condition
        .as_ref()
        .map(|c| format!("_{c}"))
        .unwrap_or_default()
}

fn cmd_simulate(o: &Opts) -> Result<()> {
    let model = o.hmm()?;
    let seed = o.seed()?;
    let n_cycles = o.n_cycles.ok_or_else(|| usage("--n-cycles is required"))?;
    if n_cycles == 0 {
        return Err(usage("--n-cycles must be >= 1"));
    }
    if o.n_series == 0 {
        return Err(usage("--n-series must be >= 1"));
    }
    let n_obs = n_cycles * model.period();
    let mut sims: Vec<Simulation> = Vec::new();
    let conditions: Vec<String> = model.conditions().map(str::to_string).collect();
    for (c, condition) in conditions.iter().enumerate() {
        for k in 0..o.n_series {
            let index = c * o.n_series + k;
            let mut sim =
                simulate_condition(&model, condition, n_obs, 1, seed.wrapping_add(index as u64))?;
            sim.series.id = format!("s{}", index + 1);
            sims.push(sim);
        }
    }
    io::write_simulation_csv(o.output("simulated.csv")?, &sims, model.period())?;
    io::write_json(o.output("model.json")?, &model)
}

fn cmd_fit(o: &Opts) -> Result<bool> {
    let template = o.hmm()?;
    let data = io::read_series_csv(o.data_path()?, Some(template.period()))?;
    let options = FitOptions {
        max_iterations: o.max_iterations,
        ..FitOptions::default()
    };
    let result = fit(&data, &template, &options)?;
    io::write_json(o.output("fit.json")?, &result)?;
    io::write_json(o.output("fitted_model.json")?, &result.model)?;
    let c = &result.convergence;
    eprintln!(
        "{:?} after {} iterations, log-likelihood {}, gradient max-norm {:.3e}",
        c.status, c.iterations, result.log_likelihood, c.gradient_norm
    );
    Ok(c.status == FitStatus::Converged)
}

fn bands_for(
    o: &Opts,
    fitted: &FitResult,
    make: impl Fn(Option<String>, usize) -> (String, Functional),
) -> Result<Vec<(String, usize, phmm::estimate::Bands)>> {
    let seed = o.seed()?;
    let single = fitted.model.processes().len() == 1;
    let mut out = Vec::new();
    for condition in fitted.model.conditions() {
        let condition = (!single).then(|| condition.to_string());
        for state in 0..fitted.model.n_states() {
            let (name, functional) = make(condition.clone(), state);
            let bands = mc_confidence(fitted, &functional, o.n_draws, o.level, seed)?;
            out.push((format!("{name}{}", suffix(&condition)), state, bands));
        }
    }
    Ok(out)
}

fn cmd_stationary(o: &Opts) -> Result<()> {
    for (condition, tpm) in o.chains()? {
        let delta = stationary_exact(&tpm)?;
        let rho = stationary_hypothetical(&tpm)?;
        let mut dists = vec![delta, rho];
        if let Some(n_cycles) = o.n_cycles {
            if n_cycles == 0 {
                return Err(usage("--n-cycles must be >= 1"));
            }
            dists.push(empirical_state_frequencies(&tpm, n_cycles, o.seed()?)?);
        }
        let refs: Vec<_> = dists.iter().collect();
        io::write_distribution_csv(
            o.output(&format!("stationary{}.csv", suffix(&condition)))?,
            &refs,
        )?;
    }
    if let Some(fitted) = o.fitted()? {
        let mut bands = bands_for(o, &fitted, |condition, state| {
            ("delta".into(), Functional::Delta { condition, state })
        })?;
        bands.extend(bands_for(o, &fitted, |condition, state| {
            ("rho".into(), Functional::Rho { condition, state })
        })?);
        io::write_bands_csv(o.output("stationary_bands.csv")?, &bands)?;
    }
    Ok(())
}

fn cmd_dwell(o: &Opts) -> Result<()> {
    for (condition, tpm) in o.chains()? {
        let mut pmfs = Vec::new();
        let mut means = Vec::new();
        for state in 0..tpm.n_states() {
            pmfs.extend(dwell::dwell_pmfs(&tpm, state, o.r_max)?);
            pmfs.push(dwell::dwell_pmf_overall(&tpm, state, o.r_max)?);
            for (k, mean) in dwell::dwell_means(&tpm, state)?.into_iter().enumerate() {
                means.push(MeanRow {
                    state,
                    t: Some(k + 1),
                    mean,
                });
            }
            means.push(MeanRow {
                state,
                t: None,
                mean: dwell::dwell_mean_overall(&tpm, state)?,
            });
        }
        let tag = suffix(&condition);
        io::write_dwell_csv(o.output(&format!("dwell_pmf{tag}.csv"))?, &pmfs)?;
        io::write_means_csv(o.output(&format!("dwell_means{tag}.csv"))?, &means)?;
    }
    if let Some(fitted) = o.fitted()? {
        let bands = bands_for(o, &fitted, |condition, state| {
            (
                "dwell_mean".into(),
                Functional::DwellMean { condition, state },
            )
        })?;
        io::write_bands_csv(o.output("dwell_bands.csv")?, &bands)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CheckSummary {
    condition: Option<String>,
    state: usize,
    r_max: usize,
    n_sequences: usize,
    tv_distance: f64,
}

fn run_check(o: &Opts, model: &HmmModel, tag: &str) -> Result<Vec<CheckSummary>> {
    let seed = o.seed()?;
    let data = io::read_series_csv(o.data_path()?, Some(model.period()))?;
    let single = model.processes().len() == 1;
    let mut summary = Vec::new();
    for condition in model.conditions() {
        let condition = (!single).then(|| condition.to_string());
        let tpm = model.tpm(condition.as_deref())?;
        let mut reports: Vec<DwellComparison> = Vec::new();
        for state in 0..model.n_states() {
            let r_max = match o.r_max {
                Some(r) => r,
                None => default_r_max(&tpm, state)?,
            };
            let report = dwell_check(
                model,
                &data,
                condition.as_deref(),
                state,
                o.n_seq,
                r_max,
                seed,
            )?;
            summary.push(CheckSummary {
                condition: condition.clone(),
                state: state + 1,
                r_max,
                n_sequences: o.n_seq,
                tv_distance: report.tv_distance,
            });
            reports.push(report);
        }
        io::write_comparison_csv(
            o.output(&format!("{tag}{}.csv", suffix(&condition)))?,
            &reports,
        )?;
    }
    Ok(summary)
}

fn cmd_check(o: &Opts) -> Result<()> {
    let summary = run_check(o, &o.hmm()?, "check")?;
    io::write_json(o.output("check.json")?, &summary)
}

#[derive(Serialize)]
struct CompareSummary {
    model: Vec<CheckSummary>,
    against: Vec<CheckSummary>,
    total_tv_model: f64,
    total_tv_against: f64,
}

fn cmd_compare(o: &Opts) -> Result<()> {
    let model = o.hmm()?;
    let against_path = o
        .against
        .as_deref()
        .ok_or_else(|| usage("--against is required"))?;
    let against: HmmModel = io::read_json(against_path)?;
    let a = run_check(o, &model, "check_model")?;
    let b = run_check(o, &against, "check_against")?;
    let total = |s: &[CheckSummary]| s.iter().map(|c| c.tv_distance).sum();
    let summary = CompareSummary {
        total_tv_model: total(&a),
        total_tv_against: total(&b),
        model: a,
        against: b,
    };
    io::write_json(o.output("compare.json")?, &summary)
}

fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var("PHMM_THREADS") {
        let n: usize = value
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| usage("PHMM_THREADS must be a positive integer"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(&e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    configure_threads()?;
    match &cli.command {
        Command::Simulate(o) => cmd_simulate(o).map(|_| true),
        Command::Fit(o) => cmd_fit(o),
        Command::Stationary(o) => cmd_stationary(o).map(|_| true),
        Command::Dwell(o) => cmd_dwell(o).map(|_| true),
        Command::Check(o) => cmd_check(o).map(|_| true),
        Command::Compare(o) => cmd_compare(o).map(|_| true),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("phmm: the optimizer did not converge; see fit.json");
            ExitCode::from(3)
        }
        Err(e @ Error::Argument(_)) => {
            eprintln!("phmm: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("phmm: {e}");
            ExitCode::FAILURE
        }
    }
}
