//! State dwell-time distributions of a periodically inhomogeneous chain.
//!
//! A stay in state `i` entered at time `t` ends after `r` steps with probability
//! `d_t(r) = (1 - g(t+r-1)) * g(t) * ... * g(t+r-2)` where `g(s)` is the diagonal entry
//! `gamma_ii` at time `s`. Every block of `L` consecutive factors multiplies to the same
//! per-cycle stay factor `q = g(1) * ... * g(L)`, so tails beyond whole cycles are known in
//! closed form. The overall distribution mixes the `L` start-time distributions with
//! weights proportional to the probability of entering `i` at each time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::PeriodicTpm;
use crate::stationary::{stationary_exact, DistributionKind, PeriodicDistribution};

/// Target tail mass when choosing a default truncation point.
pub const TAIL_EPS: f64 = 1e-12;

/// Hard cap on default truncation points.
pub const MAX_R: usize = 10_000;

/// Truncated dwell-time pmf over `r = 1..=support_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwellPmf {
    pub state: usize,
    /// `None` for the overall (start-time marginal) distribution.
    pub start_time: Option<usize>,
    /// `pmf[r - 1]` is the probability of a dwell time of exactly `r`.
    pub pmf: Vec<f64>,
    /// `Pr(R > support_max)`.
    pub tail_mass: f64,
}

impl DwellPmf {
    pub fn support_max(&self) -> usize {
        self.pmf.len()
    }

    /// `Pr(R = r)`, zero outside the stored support.
    pub fn prob(&self, r: usize) -> f64 {
        if r == 0 {
            0.0
        } else {
            self.pmf.get(r - 1).copied().unwrap_or(0.0)
        }
    }

    /// `sum_r r * d(r)` over the stored support.
    pub fn truncated_mean(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(k, p)| (k + 1) as f64 * p)
            .sum()
    }

    /// Smallest `r` with `d(r + 1) > d(r)`, if the pmf is not monotonically decreasing.
    pub fn first_increase(&self) -> Option<usize> {
        self.pmf.windows(2).position(|w| w[1] > w[0]).map(|k| k + 1)
    }
}

/// Weights over entry times `t = 1..=L` mixing the time-varying distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureWeights {
    pub state: usize,
    pub weights: Vec<f64>,
}

fn check_state(tpm: &PeriodicTpm, i: usize) -> Result<()> {
    if i >= tpm.n_states() {
        return Err(Error::arg(format!(
            "state {i} out of range for a {}-state chain",
            tpm.n_states()
        )));
    }
    Ok(())
}

fn check_time(tpm: &PeriodicTpm, t: usize) -> Result<()> {
    if t < 1 || t > tpm.period() {
        return Err(Error::arg(format!(
            "time index {t} outside 1..={}",
            tpm.period()
        )));
    }
    Ok(())
}

/// `prod_{t=1}^{L} gamma_ii(t)`: probability of staying in `i` for one full cycle.
pub fn cycle_stay_factor(tpm: &PeriodicTpm, i: usize) -> f64 {
    (1..=tpm.period() as i64).map(|t| tpm.stay(i, t)).product()
}

fn check_finite_stay(tpm: &PeriodicTpm, i: usize) -> Result<f64> {
    check_state(tpm, i)?;
    let q = cycle_stay_factor(tpm, i);
    if q >= 1.0 {
        return Err(Error::Divergence(format!(
            "state {} is never left (all diagonal entries are 1); the dwell time is infinite",
            i + 1
        )));
    }
    Ok(q)
}

/// Smallest multiple of `L` whose tail mass falls below [`TAIL_EPS`], capped at [`MAX_R`].
pub fn default_r_max(tpm: &PeriodicTpm, i: usize) -> Result<usize> {
    let q = check_finite_stay(tpm, i)?;
    let l = tpm.period();
    let cycles = if q <= 0.0 {
        1
    } else {
        ((TAIL_EPS.ln() / q.ln()).floor() as usize + 1).max(1)
    };
    let cap = (MAX_R / l).max(1);
    Ok(cycles.min(cap) * l)
}

fn resolve_r_max(tpm: &PeriodicTpm, i: usize, r_max: Option<usize>) -> Result<usize> {
    match r_max {
        Some(0) => Err(Error::arg("r_max must be >= 1")),
        Some(r) => Ok(r),
        None => default_r_max(tpm, i),
    }
}

/// Running-product evaluation of `d_t(r)` for `r = 1..=r_max`, plus the tail.
fn time_varying_pmf(diag: &[f64], t: usize, r_max: usize) -> (Vec<f64>, f64) {
    let l = diag.len();
    let mut pmf = Vec::with_capacity(r_max);
    let mut stay = 1.0;
    for r in 1..=r_max {
        let g = diag[(t - 1 + r - 1) % l];
        pmf.push((1.0 - g) * stay);
        stay *= g;
    }
    (pmf, stay)
}

fn diagonal(tpm: &PeriodicTpm, i: usize) -> Vec<f64> {
    (1..=tpm.period() as i64).map(|t| tpm.stay(i, t)).collect()
}

/// Dwell-time pmf of a stay in state `i` entered at time `t`.
pub fn dwell_pmf_at(tpm: &PeriodicTpm, i: usize, t: usize, r_max: usize) -> Result<DwellPmf> {
    check_time(tpm, t)?;
    check_finite_stay(tpm, i)?;
    if r_max == 0 {
        return Err(Error::arg("r_max must be >= 1"));
    }
    let (pmf, tail_mass) = time_varying_pmf(&diagonal(tpm, i), t, r_max);
    Ok(DwellPmf {
        state: i,
        start_time: Some(t),
        pmf,
        tail_mass,
    })
}

/// Time-varying pmfs for every entry time `t = 1..=L`, sharing one diagonal extraction.
///
/// `r_max = None` uses [`default_r_max`].
pub fn dwell_pmfs(tpm: &PeriodicTpm, i: usize, r_max: Option<usize>) -> Result<Vec<DwellPmf>> {
    check_finite_stay(tpm, i)?;
    let r_max = resolve_r_max(tpm, i, r_max)?;
    let diag = diagonal(tpm, i);
    Ok((1..=tpm.period())
        .map(|t| {
            let (pmf, tail_mass) = time_varying_pmf(&diag, t, r_max);
            DwellPmf {
                state: i,
                start_time: Some(t),
                pmf,
                tail_mass,
            }
        })
        .collect())
}

/// Expected dwell time of a stay in `i` entered at `t`, from the first cycle of the pmf.
pub fn dwell_mean_at(tpm: &PeriodicTpm, i: usize, t: usize) -> Result<f64> {
    check_time(tpm, t)?;
    check_finite_stay(tpm, i)?;
    let (pmf, _) = time_varying_pmf(&diagonal(tpm, i), t, tpm.period());
    Ok(cycle_mean_ratio(&pmf, tpm.period()) - tpm.period() as f64)
}

/// `(L + sum r d(r)) / sum d(r)` over `r = 1..=L`.
fn cycle_mean_ratio(first_cycle: &[f64], l: usize) -> f64 {
    let mass: f64 = first_cycle.iter().sum();
    let moment: f64 = first_cycle
        .iter()
        .enumerate()
        .map(|(k, p)| (k + 1) as f64 * p)
        .sum();
    (l as f64 + moment) / mass
}

/// Means for every entry time `t = 1..=L`.
pub fn dwell_means(tpm: &PeriodicTpm, i: usize) -> Result<Vec<f64>> {
    check_finite_stay(tpm, i)?;
    let l = tpm.period();
    let diag = diagonal(tpm, i);
    Ok((1..=l)
        .map(|t| cycle_mean_ratio(&time_varying_pmf(&diag, t, l).0, l) - l as f64)
        .collect())
}

/// Entry-time weights `w(t) ∝ sum_{l != i} delta_l(t-1) gamma_li(t-1)`.
pub fn mixture_weights(
    tpm: &PeriodicTpm,
    delta: &PeriodicDistribution,
    i: usize,
) -> Result<MixtureWeights> {
    check_state(tpm, i)?;
    if delta.kind != DistributionKind::ExactDelta {
        return Err(Error::arg(format!(
            "mixture weights need the exact periodically stationary distribution, got {}",
            delta.kind
        )));
    }
    if delta.period() != tpm.period() || delta.n_states() != tpm.n_states() {
        return Err(Error::arg("distribution and schedule shapes differ"));
    }
    let raw: Vec<f64> = (1..=tpm.period() as i64)
        .map(|t| {
            let prev = delta.at(t - 1);
            let g = tpm.matrix(t - 1);
            (0..tpm.n_states())
                .filter(|&l| l != i)
                .map(|l| prev[l] * g[(l, i)])
                .sum()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::model(format!(
            "state {} is never entered from another state",
            i + 1
        )));
    }
    Ok(MixtureWeights {
        state: i,
        weights: raw.into_iter().map(|w| w / total).collect(),
    })
}

/// Overall dwell-time pmf of state `i`, mixing over entry times.
pub fn dwell_pmf_overall(tpm: &PeriodicTpm, i: usize, r_max: Option<usize>) -> Result<DwellPmf> {
    check_finite_stay(tpm, i)?;
    let delta = stationary_exact(tpm)?;
    let weights = mixture_weights(tpm, &delta, i)?;
    dwell_pmf_overall_with(tpm, &weights, r_max)
}

/// Overall pmf with precomputed weights.
pub fn dwell_pmf_overall_with(
    tpm: &PeriodicTpm,
    weights: &MixtureWeights,
    r_max: Option<usize>,
) -> Result<DwellPmf> {
    let i = weights.state;
    let parts = dwell_pmfs(tpm, i, r_max)?;
    let r_max = parts[0].support_max();
    let mut pmf = vec![0.0; r_max];
    let mut tail_mass = 0.0;
    for (w, part) in weights.weights.iter().zip(&parts) {
        for (acc, p) in pmf.iter_mut().zip(&part.pmf) {
            *acc += w * p;
        }
        tail_mass += w * part.tail_mass;
    }
    Ok(DwellPmf {
        state: i,
        start_time: None,
        pmf,
        tail_mass,
    })
}

/// Expected overall dwell time `sum_t w(t) (L + sum r d_t(r)) / sum d_t(r) - L`.
pub fn dwell_mean_overall(tpm: &PeriodicTpm, i: usize) -> Result<f64> {
    check_finite_stay(tpm, i)?;
    let delta = stationary_exact(tpm)?;
    let weights = mixture_weights(tpm, &delta, i)?;
    Ok(dwell_mean_overall_with(tpm, &weights))
}

pub fn dwell_mean_overall_with(tpm: &PeriodicTpm, weights: &MixtureWeights) -> f64 {
    let l = tpm.period();
    let diag = diagonal(tpm, weights.state);
    let mixed: f64 = weights
        .weights
        .iter()
        .enumerate()
        .map(|(k, w)| w * cycle_mean_ratio(&time_varying_pmf(&diag, k + 1, l).0, l))
        .sum();
    mixed - l as f64
}

/// `Pr(R > s)` for a stay entered at `t`, or for the overall dwell time when `t` is `None`.
///
/// Whole cycles contribute the stay factor `q` each; only the remainder is multiplied out.
pub fn survival(tpm: &PeriodicTpm, i: usize, t: Option<usize>, s: usize) -> Result<f64> {
    check_state(tpm, i)?;
    if let Some(t) = t {
        check_time(tpm, t)?;
    }
    if s == 0 {
        return Ok(1.0);
    }
    let diag = diagonal(tpm, i);
    match t {
        Some(t) => Ok(survival_from(&diag, t, s)),
        None => {
            let delta = stationary_exact(tpm)?;
            let weights = mixture_weights(tpm, &delta, i)?;
            Ok(weights
                .weights
                .iter()
                .enumerate()
                .map(|(k, w)| w * survival_from(&diag, k + 1, s))
                .sum())
        }
    }
}

fn survival_from(diag: &[f64], t: usize, s: usize) -> f64 {
    let l = diag.len();
    let q: f64 = diag.iter().product();
    let partial: f64 = (0..s % l).map(|k| diag[(t - 1 + k) % l]).product();
    q.powi((s / l) as i32) * partial
}
