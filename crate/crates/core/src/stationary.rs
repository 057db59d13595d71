//! Periodically stationary state distributions.
//!
//! The exact distribution `delta(t)` is the stationary distribution of the thinned chain
//! observed every `L` steps from anchor `t`, whose transition matrix is the cyclic product
//! `G(t) G(t+1) ... G(t+L-1)`. It is solved once at `t = 1` and propagated with
//! `delta(t+1) = delta(t) G(t)`. The hypothetical distribution `rho(t)` treats each
//! `G(t)` as if it were held constant forever; it is exposed for comparison only.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::PeriodicTpm;

/// Entries at or below this threshold count as absent edges in the reachability check.
pub const IRREDUCIBILITY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    ExactDelta,
    HypotheticalRho,
    Empirical,
}

impl DistributionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DistributionKind::ExactDelta => "exact_delta",
            DistributionKind::HypotheticalRho => "hypothetical_rho",
            DistributionKind::Empirical => "empirical",
        }
    }
}

impl fmt::Display for DistributionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One probability vector per cycle position.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicDistribution {
    pub kind: DistributionKind,
    probs: Vec<Vec<f64>>,
}

impl PeriodicDistribution {
    pub fn new(kind: DistributionKind, probs: Vec<Vec<f64>>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::arg(
                "a periodic distribution needs at least one time point",
            ));
        }
        let n = probs[0].len();
        for (idx, p) in probs.iter().enumerate() {
            if p.len() != n {
                return Err(Error::arg(
                    "all probability vectors must have the same length",
                ));
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > 1e-10 || p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::arg(format!(
                    "vector at t = {} is not a probability vector (sum {sum})",
                    idx + 1
                )));
            }
        }
        Ok(Self { kind, probs })
    }

    pub fn period(&self) -> usize {
        self.probs.len()
    }

    pub fn n_states(&self) -> usize {
        self.probs[0].len()
    }

    /// Distribution at time `t`, reduced onto the cycle.
    pub fn at(&self, t: i64) -> &[f64] {
        &self.probs[crate::link::cycle_position(t, self.period()) - 1]
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }

    /// Largest absolute entrywise difference to another distribution of the same shape.
    pub fn max_abs_diff(&self, other: &PeriodicDistribution) -> f64 {
        self.probs
            .iter()
            .flatten()
            .zip(other.probs.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Transition matrix of the chain thinned to every `L`-th step from `anchor`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinnedTpm {
    pub anchor: usize,
    pub matrix: DMatrix<f64>,
}

pub fn thinned_tpm(tpm: &PeriodicTpm, t: usize) -> Result<ThinnedTpm> {
    let l = tpm.period();
    if t < 1 || t > l {
        return Err(Error::arg(format!("anchor {t} outside 1..={l}")));
    }
    let mut product = tpm.matrix(t as i64).clone();
    for k in 1..l {
        product = &product * tpm.matrix((t + k) as i64);
    }
    Ok(ThinnedTpm {
        anchor: t,
        matrix: product,
    })
}

/// Whether the directed graph of entries above [`IRREDUCIBILITY_EPS`] is strongly connected.
pub fn is_irreducible(matrix: &DMatrix<f64>) -> bool {
    let n = matrix.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let w = if forward {
                    matrix[(u, v)]
                } else {
                    matrix[(v, u)]
                };
                if !seen[v] && w > IRREDUCIBILITY_EPS {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    n > 0 && reach(true) && reach(false)
}

/// Stationary row vector of an irreducible stochastic matrix, via `pi (I - G + U) = 1`.
pub fn stationary_vector(matrix: &DMatrix<f64>) -> Result<Vec<f64>> {
    if !is_irreducible(matrix) {
        return Err(Error::model("transition matrix is reducible"));
    }
    let n = matrix.nrows();
    let system = (DMatrix::identity(n, n) - matrix)
        .add_scalar(1.0)
        .transpose();
    let rhs = DVector::from_element(n, 1.0);
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::model("stationary system is singular"))?;
    // round-off can leave tiny negatives
    let mut pi: Vec<f64> = sol.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= total);
    Ok(pi)
}

/// How [`stationary_exact_with`] obtains `delta(t)` for `t > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StationaryMethod {
    /// One solve at `t = 1`, then one-step propagation.
    #[default]
    Recursive,
    /// An independent solve of the thinned chain at every anchor.
    Direct,
}

pub fn stationary_exact(tpm: &PeriodicTpm) -> Result<PeriodicDistribution> {
    stationary_exact_with(tpm, StationaryMethod::Recursive)
}

pub fn stationary_exact_with(
    tpm: &PeriodicTpm,
    method: StationaryMethod,
) -> Result<PeriodicDistribution> {
    let l = tpm.period();
    let thinned = thinned_tpm(tpm, 1)?;
    if !is_irreducible(&thinned.matrix) {
        return Err(Error::model(
            "no unique periodically stationary distribution",
        ));
    }
    let mut probs = Vec::with_capacity(l);
    probs.push(stationary_vector(&thinned.matrix)?);
    for t in 1..l {
        let next = match method {
            StationaryMethod::Recursive => {
                let prev = DVector::from_column_slice(&probs[t - 1]).transpose();
                let row = prev * tpm.matrix(t as i64);
                row.iter().copied().collect()
            }
            StationaryMethod::Direct => {
                let thinned = thinned_tpm(tpm, t + 1)?;
                stationary_vector(&thinned.matrix)
                    .map_err(|_| Error::model("no unique periodically stationary distribution"))?
            }
        };
        probs.push(next);
    }
    Ok(PeriodicDistribution {
        kind: DistributionKind::ExactDelta,
        probs,
    })
}

pub fn stationary_hypothetical(tpm: &PeriodicTpm) -> Result<PeriodicDistribution> {
    let probs = tpm
        .matrices()
        .iter()
        .enumerate()
        .map(|(idx, m)| {
            stationary_vector(m).map_err(|_| {
                Error::model(format!(
                    "transition matrix at t = {} is reducible; no hypothetical stationary distribution",
                    idx + 1
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PeriodicDistribution {
        kind: DistributionKind::HypotheticalRho,
        probs,
    })
}

/// Draws the successor of `state` from row `state` of `matrix`.
pub(crate) fn step<R: Rng + ?Sized>(rng: &mut R, matrix: &DMatrix<f64>, state: usize) -> usize {
    sample_categorical(rng, matrix.row(state).iter().copied())
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(
    rng: &mut R,
    probs: impl IntoIterator<Item = f64>,
) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, p) in probs.into_iter().enumerate() {
        acc += p;
        if p > 0.0 {
            last = k;
        }
        if u < acc {
            return k;
        }
    }
    last
}

/// Simulates a periodically stationary state path of `len` steps starting at cycle position 1.
pub fn simulate_chain(tpm: &PeriodicTpm, len: usize, seed: u64) -> Result<Vec<usize>> {
    let delta = stationary_exact(tpm)?;
    Ok(simulate_chain_from(tpm, delta.at(1), 1, len, seed))
}

/// State path from an explicit initial distribution at cycle position `start`.
pub fn simulate_chain_from(
    tpm: &PeriodicTpm,
    initial: &[f64],
    start: usize,
    len: usize,
    seed: u64,
) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut path = Vec::with_capacity(len);
    if len == 0 {
        return path;
    }
    let mut state = sample_categorical(&mut rng, initial.iter().copied());
    path.push(state);
    for k in 1..len {
        state = step(&mut rng, tpm.matrix((start + k - 1) as i64), state);
        path.push(state);
    }
    path
}

/// Per-position relative state frequencies of one simulated realization of
/// `n_cycles * L` steps started from `delta(1)`.
pub fn empirical_state_frequencies(
    tpm: &PeriodicTpm,
    n_cycles: usize,
    seed: u64,
) -> Result<PeriodicDistribution> {
    if n_cycles < 1 {
        return Err(Error::arg("n_cycles must be >= 1"));
    }
    let l = tpm.period();
    let n = tpm.n_states();
    let path = simulate_chain(tpm, n_cycles * l, seed)?;
    let mut counts = vec![vec![0usize; n]; l];
    for (k, &s) in path.iter().enumerate() {
        counts[k % l][s] += 1;
    }
    let probs = counts
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|c| c as f64 / n_cycles as f64)
                .collect()
        })
        .collect();
    Ok(PeriodicDistribution {
        kind: DistributionKind::Empirical,
        probs,
    })
}
