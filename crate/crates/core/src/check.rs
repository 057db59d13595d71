//! Dwell-time model checking.
//!
//! State sequences are drawn from the local (per-step) posteriors of a fitted model, each
//! step independently. Each sequence is run-length encoded; its first and last runs are
//! censored (their true lengths are unknown) and dropped. The remaining run lengths of a
//! state give one relative-frequency vector per draw, and these are averaged over draws.
//! The result is compared with the model-implied overall dwell-time distribution.

use nalgebra::DMatrix;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dwell::{dwell_pmf_overall, DwellPmf};
use crate::error::{Error, Result};
use crate::hmm::{local_decode_prepared, HmmModel, ObservationSeries};
use crate::stationary::sample_categorical;

/// Averaged relative frequencies of complete run lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDwell {
    pub state: usize,
    /// `pmf[r - 1]` is the averaged relative frequency of runs of length `r`.
    pub pmf: Vec<f64>,
    pub n_sequences: usize,
    /// Complete runs of the state summed over all draws.
    pub n_runs: usize,
}

/// `(state, length)` runs of a sequence.
pub fn run_lengths(sequence: &[usize]) -> Vec<(usize, usize)> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for &s in sequence {
        match runs.last_mut() {
            Some((state, len)) if *state == s => *len += 1,
            _ => runs.push((s, 1)),
        }
    }
    runs
}

/// Samples `n_seq` sequences, each step drawn independently from its posterior row.
///
/// Sequence `k` uses stream `k` of a ChaCha generator seeded with `seed`.
pub fn sample_from_posterior(posterior: &DMatrix<f64>, n_seq: usize, seed: u64) -> Vec<Vec<usize>> {
    sample_streams(posterior, n_seq, seed, 0)
}

fn sample_streams(
    posterior: &DMatrix<f64>,
    n_seq: usize,
    seed: u64,
    first_stream: u64,
) -> Vec<Vec<usize>> {
    (0..n_seq)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(first_stream + k as u64);
            (0..posterior.nrows())
                .map(|t| sample_categorical(&mut rng, posterior.row(t).iter().copied()))
                .collect()
        })
        .collect()
}

/// Decodes `series` and samples `n_seq` state sequences from the local posteriors.
pub fn sample_decoded_sequences(
    model: &HmmModel,
    series: &ObservationSeries,
    n_seq: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if n_seq < 1 {
        return Err(Error::arg("n_seq must be >= 1"));
    }
    let prepared = model.prepare()?;
    let posterior = local_decode_prepared(model, &prepared, series)?;
    Ok(sample_from_posterior(&posterior, n_seq, seed))
}

/// Tally of complete runs of `state` across the sequences of one draw.
fn tally(draw: &[&[usize]], state: usize, r_max: usize) -> (Vec<usize>, usize) {
    let mut counts = vec![0usize; r_max];
    let mut total = 0;
    for seq in draw {
        let runs = run_lengths(seq);
        if runs.len() < 3 {
            continue;
        }
        for &(s, len) in &runs[1..runs.len() - 1] {
            if s == state {
                total += 1;
                if len <= r_max {
                    counts[len - 1] += 1;
                }
            }
        }
    }
    (counts, total)
}

fn average_draws(
    draws: Vec<(Vec<usize>, usize)>,
    state: usize,
    r_max: usize,
    n_sequences: usize,
) -> Result<EmpiricalDwell> {
    let mut pmf = vec![0.0; r_max];
    let mut used = 0usize;
    let mut n_runs = 0usize;
    for (counts, total) in draws {
        if total == 0 {
            continue;
        }
        used += 1;
        n_runs += total;
        for (acc, c) in pmf.iter_mut().zip(counts) {
            *acc += c as f64 / total as f64;
        }
    }
    if used == 0 {
        return Err(Error::Check(format!(
            "state {} has no complete (uncensored) run in any sequence",
            state + 1
        )));
    }
    pmf.iter_mut().for_each(|p| *p /= used as f64);
    Ok(EmpiricalDwell {
        state,
        pmf,
        n_sequences,
        n_runs,
    })
}

/// Empirical dwell-time pmf of `state` from a set of sequences, each treated as one draw.
pub fn empirical_dwell(
    sequences: &[Vec<usize>],
    state: usize,
    r_max: usize,
) -> Result<EmpiricalDwell> {
    if sequences.is_empty() {
        return Err(Error::arg("at least one sequence is required"));
    }
    if r_max < 1 {
        return Err(Error::arg("r_max must be >= 1"));
    }
    let draws = sequences
        .iter()
        .map(|s| tally(&[s.as_slice()], state, r_max))
        .collect();
    average_draws(draws, state, r_max, sequences.len())
}

/// Empirical pmf where each draw is a set of sequences (one per observed series) whose
/// runs are pooled before computing frequencies.
pub fn empirical_dwell_pooled(
    draws: &[Vec<Vec<usize>>],
    state: usize,
    r_max: usize,
) -> Result<EmpiricalDwell> {
    if draws.is_empty() {
        return Err(Error::arg("at least one draw is required"));
    }
    if r_max < 1 {
        return Err(Error::arg("r_max must be >= 1"));
    }
    let tallies = draws
        .iter()
        .map(|d| {
            let refs: Vec<&[usize]> = d.iter().map(Vec::as_slice).collect();
            tally(&refs, state, r_max)
        })
        .collect();
    average_draws(tallies, state, r_max, draws.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub r: usize,
    pub analytic: f64,
    pub empirical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwellComparison {
    pub state: usize,
    pub rows: Vec<ComparisonRow>,
    /// Half the summed absolute differences over the truncated support.
    pub tv_distance: f64,
}

impl DwellComparison {
    pub fn differences(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.empirical - r.analytic).collect()
    }
}

pub fn compare_dwell(analytic: &DwellPmf, empirical: &EmpiricalDwell) -> Result<DwellComparison> {
    if analytic.state != empirical.state {
        return Err(Error::arg(format!(
            "comparing state {} with state {}",
            analytic.state + 1,
            empirical.state + 1
        )));
    }
    if analytic.support_max() != empirical.pmf.len() {
        return Err(Error::arg(format!(
            "supports differ: {} vs {}",
            analytic.support_max(),
            empirical.pmf.len()
        )));
    }
    let rows: Vec<ComparisonRow> = analytic
        .pmf
        .iter()
        .zip(&empirical.pmf)
        .enumerate()
        .map(|(k, (&a, &e))| ComparisonRow {
            r: k + 1,
            analytic: a,
            empirical: e,
        })
        .collect();
    let tv_distance = 0.5
        * rows
            .iter()
            .map(|r| (r.analytic - r.empirical).abs())
            .sum::<f64>();
    Ok(DwellComparison {
        state: analytic.state,
        rows,
        tv_distance,
    })
}

/// Full check for one state: decode every series, draw `n_seq` state sequences per series,
/// pool runs per draw and compare with the overall dwell pmf under `condition`.
///
/// Only series belonging to `condition` are used when the model has several conditions.
pub fn dwell_check(
    model: &HmmModel,
    data: &[ObservationSeries],
    condition: Option<&str>,
    state: usize,
    n_seq: usize,
    r_max: usize,
    seed: u64,
) -> Result<DwellComparison> {
    if n_seq < 1 {
        return Err(Error::arg("n_seq must be >= 1"));
    }
    if state >= model.n_states() {
        return Err(Error::arg(format!("state {} out of range", state + 1)));
    }
    let tpm = model.tpm(condition)?;
    let analytic = dwell_pmf_overall(&tpm, state, Some(r_max))?;

    let single = model.processes().len() == 1;
    let selected: Vec<&ObservationSeries> = data
        .iter()
        .filter(|s| single || s.condition.as_deref() == condition)
        .collect();
    if selected.is_empty() {
        return Err(Error::data("no series belong to the requested condition"));
    }
    let prepared = model.prepare()?;
    let per_series = selected
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let post = local_decode_prepared(model, &prepared, s)?;
            Ok(sample_streams(&post, n_seq, seed, (k * n_seq) as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let draws: Vec<Vec<Vec<usize>>> = (0..n_seq)
        .map(|j| per_series.iter().map(|seqs| seqs[j].clone()).collect())
        .collect();
    let empirical = empirical_dwell_pooled(&draws, state, r_max)?;
    compare_dwell(&analytic, &empirical)
}
