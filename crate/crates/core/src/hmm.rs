//! Count-emission hidden Markov model with a periodic state process.
//!
//! Transitions out of observation `k` (1-based) of a series starting at cycle position
//! `p` use the matrix at position `((p + k - 1 - 1) mod L) + 1`. Forward and backward
//! passes normalize at every step and accumulate the log normalizers, so long series
//! never underflow.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::link::{cycle_position, PeriodicTpm, TrigLinkSpec};
use crate::stationary::{sample_categorical, stationary_exact, step, PeriodicDistribution};

/// Name of the state process used when a model has a single condition.
pub const DEFAULT_CONDITION: &str = "default";

/// Largest count for which per-evaluation log-pmf lookup tables are built.
const TABLE_LIMIT: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmissionFamily {
    NegativeBinomial,
    Poisson,
}

/// Per-state count distributions. Means are non-decreasing in the state index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EmissionDoc", into = "EmissionDoc")]
pub struct EmissionSpec {
    family: EmissionFamily,
    means: Vec<f64>,
    /// Empty for Poisson.
    dispersions: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EmissionDoc {
    family: EmissionFamily,
    means: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dispersions: Option<Vec<f64>>,
}

impl TryFrom<EmissionDoc> for EmissionSpec {
    type Error = Error;

    fn try_from(doc: EmissionDoc) -> Result<Self> {
        match doc.family {
            EmissionFamily::Poisson => EmissionSpec::poisson(doc.means),
            EmissionFamily::NegativeBinomial => EmissionSpec::negative_binomial(
                doc.means,
                doc.dispersions
                    .ok_or_else(|| Error::arg("negative binomial emissions need dispersions"))?,
            ),
        }
    }
}

impl From<EmissionSpec> for EmissionDoc {
    fn from(spec: EmissionSpec) -> Self {
        EmissionDoc {
            family: spec.family,
            means: spec.means,
            dispersions: match spec.family {
                EmissionFamily::Poisson => None,
                EmissionFamily::NegativeBinomial => Some(spec.dispersions),
            },
        }
    }
}

fn check_positive(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
        return Err(Error::arg(format!("{name} must be positive and finite")));
    }
    Ok(())
}

impl EmissionSpec {
    /// Negative binomial with mean `mu` and dispersion `phi` (variance `mu + mu^2 / phi`).
    pub fn negative_binomial(means: Vec<f64>, dispersions: Vec<f64>) -> Result<Self> {
        if means.len() != dispersions.len() {
            return Err(Error::arg("one dispersion per state is required"));
        }
        Self::validated(EmissionFamily::NegativeBinomial, means, dispersions)
    }

    pub fn poisson(means: Vec<f64>) -> Result<Self> {
        Self::validated(EmissionFamily::Poisson, means, Vec::new())
    }

    fn validated(family: EmissionFamily, means: Vec<f64>, dispersions: Vec<f64>) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::arg("emissions need at least one state"));
        }
        check_positive("emission means", &means)?;
        check_positive("dispersions", &dispersions)?;
        if means.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::arg(
                "state means must be in ascending order (state labels follow the means)",
            ));
        }
        Ok(Self {
            family,
            means,
            dispersions,
        })
    }

    pub fn family(&self) -> EmissionFamily {
        self.family
    }

    pub fn n_states(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn dispersions(&self) -> &[f64] {
        &self.dispersions
    }

    pub fn log_pmf(&self, state: usize, x: u64) -> f64 {
        let mu = self.means[state];
        let x = x as f64;
        match self.family {
            EmissionFamily::Poisson => x * mu.ln() - mu - ln_gamma(x + 1.0),
            EmissionFamily::NegativeBinomial => {
                let phi = self.dispersions[state];
                let denom = (phi + mu).ln();
                ln_gamma(x + phi) - ln_gamma(phi) - ln_gamma(x + 1.0)
                    + phi * (phi.ln() - denom)
                    + x * (mu.ln() - denom)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> u64 {
        let mu = self.means[state];
        let lambda = match self.family {
            EmissionFamily::Poisson => mu,
            EmissionFamily::NegativeBinomial => {
                let phi = self.dispersions[state];
                Gamma::new(phi, mu / phi)
                    .expect("validated gamma parameters")
                    .sample(rng)
            }
        };
        if lambda <= 0.0 {
            return 0;
        }
        Poisson::new(lambda)
            .map(|p| p.sample(rng) as u64)
            .unwrap_or(0)
    }

    /// Reorders states: new state `perm[old]`. The result is not re-validated for order.
    pub(crate) fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        for (old, &new) in perm.iter().enumerate() {
            out.means[new] = self.means[old];
            if !self.dispersions.is_empty() {
                out.dispersions[new] = self.dispersions[old];
            }
        }
        out
    }

    pub(crate) fn with_params(&self, means: Vec<f64>, dispersions: Vec<f64>) -> Self {
        Self {
            family: self.family,
            means,
            dispersions,
        }
    }

    /// Log-pmf lookup per state for counts `0..=max_x`.
    fn table(&self, max_x: u64) -> Vec<Vec<f64>> {
        (0..self.n_states())
            .map(|s| (0..=max_x).map(|x| self.log_pmf(s, x)).collect())
            .collect()
    }
}

/// Either a trigonometric link or an explicit schedule of matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateProcess {
    Link(TrigLinkSpec),
    Schedule(PeriodicTpm),
}

impl StateProcess {
    pub fn n_states(&self) -> usize {
        match self {
            StateProcess::Link(l) => l.n_states(),
            StateProcess::Schedule(s) => s.n_states(),
        }
    }

    pub fn period(&self) -> usize {
        match self {
            StateProcess::Link(l) => l.period(),
            StateProcess::Schedule(s) => s.period(),
        }
    }

    pub fn tpm(&self) -> PeriodicTpm {
        match self {
            StateProcess::Link(l) => l.build_tpm(),
            StateProcess::Schedule(s) => s.clone(),
        }
    }

    fn permuted(&self, perm: &[usize]) -> Self {
        match self {
            StateProcess::Link(l) => StateProcess::Link(l.permuted(perm)),
            StateProcess::Schedule(s) => StateProcess::Schedule(s.permuted(perm)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum InitialPolicy {
    /// `delta` at the series' start phase.
    #[default]
    PeriodicStationary,
    Uniform,
    Fixed {
        probs: Vec<f64>,
    },
}

/// Hidden Markov model: one state process per condition plus shared emissions.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    processes: BTreeMap<String, StateProcess>,
    emissions: EmissionSpec,
    initial: InitialPolicy,
}

impl HmmModel {
    pub fn new(process: StateProcess, emissions: EmissionSpec) -> Result<Self> {
        let mut processes = BTreeMap::new();
        processes.insert(DEFAULT_CONDITION.to_string(), process);
        Self::with_conditions(processes, emissions, InitialPolicy::default())
    }

    pub fn with_link(link: TrigLinkSpec, emissions: EmissionSpec) -> Result<Self> {
        Self::new(StateProcess::Link(link), emissions)
    }

    pub fn with_conditions(
        processes: BTreeMap<String, StateProcess>,
        emissions: EmissionSpec,
        initial: InitialPolicy,
    ) -> Result<Self> {
        let first = processes
            .values()
            .next()
            .ok_or_else(|| Error::arg("a model needs at least one state process"))?;
        let (n, l) = (first.n_states(), first.period());
        for (name, p) in &processes {
            if p.n_states() != n {
                return Err(Error::arg(format!(
                    "condition {name:?} has {} states, expected {n}",
                    p.n_states()
                )));
            }
            if p.period() != l {
                return Err(Error::arg(format!(
                    "condition {name:?} has period {}, expected {l}",
                    p.period()
                )));
            }
        }
        if emissions.n_states() != n {
            return Err(Error::arg(format!(
                "emissions describe {} states but the state process has {n}",
                emissions.n_states()
            )));
        }
        if let InitialPolicy::Fixed { probs } = &initial {
            let sum: f64 = probs.iter().sum();
            if probs.len() != n || (sum - 1.0).abs() > 1e-10 || probs.iter().any(|&p| p < 0.0) {
                return Err(Error::arg(
                    "fixed initial distribution is not a probability vector",
                ));
            }
        }
        Ok(Self {
            processes,
            emissions,
            initial,
        })
    }

    pub fn with_initial(mut self, initial: InitialPolicy) -> Result<Self> {
        self.initial = initial;
        Self::with_conditions(self.processes, self.emissions, self.initial)
    }

    pub fn n_states(&self) -> usize {
        self.emissions.n_states()
    }

    pub fn period(&self) -> usize {
        self.processes.values().next().map_or(1, |p| p.period())
    }

    pub fn emissions(&self) -> &EmissionSpec {
        &self.emissions
    }

    pub fn initial(&self) -> &InitialPolicy {
        &self.initial
    }

    pub fn processes(&self) -> &BTreeMap<String, StateProcess> {
        &self.processes
    }

    pub fn conditions(&self) -> impl Iterator<Item = &str> {
        self.processes.keys().map(String::as_str)
    }

    /// State process for `condition`; a single-process model ignores the tag.
    pub fn process(&self, condition: Option<&str>) -> Result<&StateProcess> {
        if self.processes.len() == 1 {
            return Ok(self.processes.values().next().expect("non-empty"));
        }
        let name = condition.ok_or_else(|| {
            Error::data("series has no condition tag but the model has several conditions")
        })?;
        self.processes
            .get(name)
            .ok_or_else(|| Error::data(format!("unknown condition {name:?}")))
    }

    fn process_name(&self, condition: Option<&str>) -> Result<&str> {
        if self.processes.len() == 1 {
            return Ok(self.processes.keys().next().expect("non-empty"));
        }
        let name = condition.ok_or_else(|| {
            Error::data("series has no condition tag but the model has several conditions")
        })?;
        self.processes
            .get_key_value(name)
            .map(|(k, _)| k.as_str())
            .ok_or_else(|| Error::data(format!("unknown condition {name:?}")))
    }

    /// Transition schedule for `condition`.
    pub fn tpm(&self, condition: Option<&str>) -> Result<PeriodicTpm> {
        Ok(self.process(condition)?.tpm())
    }

    /// Every link-based process with its harmonics dropped.
    pub fn homogeneous(&self) -> Self {
        let processes = self
            .processes
            .iter()
            .map(|(k, p)| {
                let p = match p {
                    StateProcess::Link(l) => StateProcess::Link(l.homogeneous()),
                    other => other.clone(),
                };
                (k.clone(), p)
            })
            .collect();
        Self {
            processes,
            emissions: self.emissions.clone(),
            initial: self.initial.clone(),
        }
    }

    /// Relabels states: new state `perm[old]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let processes = self
            .processes
            .iter()
            .map(|(k, p)| (k.clone(), p.permuted(perm)))
            .collect();
        let initial = match &self.initial {
            InitialPolicy::Fixed { probs } => {
                let mut out = probs.clone();
                for (old, &new) in perm.iter().enumerate() {
                    out[new] = probs[old];
                }
                InitialPolicy::Fixed { probs: out }
            }
            other => other.clone(),
        };
        Self {
            processes,
            emissions: self.emissions.permuted(perm),
            initial,
        }
    }

    pub(crate) fn from_parts_unchecked(
        processes: BTreeMap<String, StateProcess>,
        emissions: EmissionSpec,
        initial: InitialPolicy,
    ) -> Self {
        Self {
            processes,
            emissions,
            initial,
        }
    }

    pub(crate) fn prepare(&self) -> Result<Prepared> {
        let mut schedules = BTreeMap::new();
        for (name, process) in &self.processes {
            let tpm = process.tpm();
            let delta = match self.initial {
                InitialPolicy::PeriodicStationary => Some(stationary_exact(&tpm)?),
                _ => None,
            };
            schedules.insert(name.clone(), (tpm, delta));
        }
        Ok(Prepared {
            schedules,
            initial: self.initial.clone(),
            n_states: self.n_states(),
        })
    }
}

/// Transition schedules and stationary distributions computed once per evaluation.
pub(crate) struct Prepared {
    schedules: BTreeMap<String, (PeriodicTpm, Option<PeriodicDistribution>)>,
    initial: InitialPolicy,
    n_states: usize,
}

impl Prepared {
    fn initial_at(&self, condition: &str, phase: usize) -> Vec<f64> {
        match &self.initial {
            InitialPolicy::PeriodicStationary => self.schedules[condition]
                .1
                .as_ref()
                .expect("delta prepared")
                .at(phase as i64)
                .to_vec(),
            InitialPolicy::Uniform => vec![1.0 / self.n_states as f64; self.n_states],
            InitialPolicy::Fixed { probs } => probs.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    link: Option<TrigLinkSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schedule: Option<PeriodicTpm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    conditions: Option<BTreeMap<String, StateProcess>>,
    emissions: EmissionSpec,
    #[serde(default)]
    initial: InitialPolicy,
}

impl Serialize for HmmModel {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let mut doc = ModelDoc {
            link: None,
            schedule: None,
            conditions: None,
            emissions: self.emissions.clone(),
            initial: self.initial.clone(),
        };
        match (self.processes.len(), self.processes.get(DEFAULT_CONDITION)) {
            (1, Some(StateProcess::Link(l))) => doc.link = Some(l.clone()),
            (1, Some(StateProcess::Schedule(s))) => doc.schedule = Some(s.clone()),
            _ => doc.conditions = Some(self.processes.clone()),
        }
        doc.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for HmmModel {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = ModelDoc::deserialize(deserializer)?;
        let processes = match (doc.link, doc.schedule, doc.conditions) {
            (Some(l), None, None) => {
                BTreeMap::from([(DEFAULT_CONDITION.to_string(), StateProcess::Link(l))])
            }
            (None, Some(s), None) => {
                BTreeMap::from([(DEFAULT_CONDITION.to_string(), StateProcess::Schedule(s))])
            }
            (None, None, Some(c)) => c,
            _ => {
                return Err(D::Error::custom(
                    "exactly one of \"link\", \"schedule\" or \"conditions\" is required",
                ))
            }
        };
        HmmModel::with_conditions(processes, doc.emissions, doc.initial).map_err(D::Error::custom)
    }
}

/// Counts of one individual, `None` where missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSeries {
    pub id: String,
    #[serde(default)]
    pub condition: Option<String>,
    /// Cycle position (1-based) of the first observation.
    pub start_phase: usize,
    pub values: Vec<Option<u64>>,
}

impl ObservationSeries {
    pub fn new(id: impl Into<String>, start_phase: usize, values: Vec<Option<u64>>) -> Self {
        Self {
            id: id.into(),
            condition: None,
            start_phase,
            values,
        }
    }

    pub fn from_counts(id: impl Into<String>, start_phase: usize, counts: &[u64]) -> Self {
        Self::new(id, start_phase, counts.iter().map(|&c| Some(c)).collect())
    }

    pub fn with_condition(mut self, condition: impl Into<String>) -> Self {
        self.condition = Some(condition.into());
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Cycle position of observation `k` (0-based).
    pub fn phase_of(&self, k: usize, period: usize) -> usize {
        cycle_position((self.start_phase + k) as i64, period)
    }

    fn max_count(&self) -> u64 {
        self.values.iter().flatten().copied().max().unwrap_or(0)
    }
}

fn check_series(series: &ObservationSeries, period: usize) -> Result<()> {
    if series.is_empty() {
        return Err(Error::data(format!(
            "series {:?} has no observations",
            series.id
        )));
    }
    if series.start_phase < 1 || series.start_phase > period {
        return Err(Error::data(format!(
            "series {:?} starts at phase {} outside 1..={period}",
            series.id, series.start_phase
        )));
    }
    Ok(())
}

/// Emission likelihoods rescaled so the largest entry per step is one.
struct ScaledEmissions {
    probs: Vec<Vec<f64>>,
    log_offset: Vec<f64>,
}

fn scaled_emissions(
    emissions: &EmissionSpec,
    table: Option<&[Vec<f64>]>,
    series: &ObservationSeries,
) -> ScaledEmissions {
    let n = emissions.n_states();
    let mut probs = Vec::with_capacity(series.len());
    let mut log_offset = Vec::with_capacity(series.len());
    let mut logp = vec![0.0; n];
    for value in &series.values {
        match value {
            None => {
                probs.push(vec![1.0; n]);
                log_offset.push(0.0);
            }
            Some(x) => {
                for (s, lp) in logp.iter_mut().enumerate() {
                    *lp = match table {
                        Some(tab) => tab[s][*x as usize],
                        None => emissions.log_pmf(s, *x),
                    };
                }
                let m = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                probs.push(logp.iter().map(|lp| (lp - m).exp()).collect());
                log_offset.push(m);
            }
        }
    }
    ScaledEmissions { probs, log_offset }
}

fn propagate(alpha: &[f64], g: &DMatrix<f64>, out: &mut [f64]) {
    let n = alpha.len();
    for (j, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for i in 0..n {
            acc += alpha[i] * g[(i, j)];
        }
        *o = acc;
    }
}

/// Neumaier compensated sum; long series add up ~1e5 terms of similar size.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        self.carry += if self.sum.abs() >= v.abs() {
            (self.sum - t) + v
        } else {
            (v - t) + self.sum
        };
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

struct ForwardPass {
    log_likelihood: f64,
    /// Normalized forward vectors, one per step (only kept when requested).
    alphas: Vec<Vec<f64>>,
}

fn forward(
    tpm: &PeriodicTpm,
    initial: &[f64],
    em: &ScaledEmissions,
    start_phase: usize,
    keep: bool,
) -> Result<ForwardPass> {
    let n = initial.len();
    let t_len = em.probs.len();
    let mut alphas = Vec::with_capacity(if keep { t_len } else { 0 });
    let mut alpha: Vec<f64> = initial.to_vec();
    let mut next = vec![0.0; n];
    let mut ll = CompensatedSum::default();
    for k in 0..t_len {
        if k > 0 {
            propagate(&alpha, tpm.matrix((start_phase + k - 1) as i64), &mut next);
            alpha.copy_from_slice(&next);
        }
        let mut c = 0.0;
        for (a, e) in alpha.iter_mut().zip(&em.probs[k]) {
            *a *= e;
            c += *a;
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Numeric {
                step: k + 1,
                message: format!("forward normalizer is {c}"),
            });
        }
        alpha.iter_mut().for_each(|a| *a /= c);
        ll.add(c.ln());
        ll.add(em.log_offset[k]);
        if keep {
            alphas.push(alpha.clone());
        }
    }
    let ll = ll.value();
    if !ll.is_finite() {
        return Err(Error::Numeric {
            step: t_len,
            message: "log-likelihood is not finite".into(),
        });
    }
    Ok(ForwardPass {
        log_likelihood: ll,
        alphas,
    })
}

fn table_for<'a>(
    emissions: &EmissionSpec,
    series: impl IntoIterator<Item = &'a ObservationSeries>,
) -> Option<Vec<Vec<f64>>> {
    let max = series.into_iter().map(|s| s.max_count()).max().unwrap_or(0);
    (max <= TABLE_LIMIT).then(|| emissions.table(max))
}

pub(crate) fn log_likelihood_prepared(
    model: &HmmModel,
    prepared: &Prepared,
    series: &[ObservationSeries],
) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::data("at least one series is required"));
    }
    let period = model.period();
    let table = table_for(&model.emissions, series);
    let per_series = series
        .par_iter()
        .map(|s| {
            check_series(s, period)?;
            let name = model.process_name(s.condition.as_deref())?;
            let (tpm, _) = &prepared.schedules[name];
            let em = scaled_emissions(&model.emissions, table.as_deref(), s);
            let init = prepared.initial_at(name, s.start_phase);
            forward(tpm, &init, &em, s.start_phase, false).map(|f| f.log_likelihood)
        })
        .collect::<Result<Vec<f64>>>()?;
    // fixed reduction order: by id, then by input position
    let mut order: Vec<usize> = (0..series.len()).collect();
    order.sort_by(|&a, &b| series[a].id.cmp(&series[b].id).then(a.cmp(&b)));
    let mut total = CompensatedSum::default();
    order.into_iter().for_each(|k| total.add(per_series[k]));
    Ok(total.value())
}

/// Joint log-likelihood of independent series.
pub fn log_likelihood(model: &HmmModel, series: &[ObservationSeries]) -> Result<f64> {
    let prepared = model.prepare()?;
    log_likelihood_prepared(model, &prepared, series)
}

/// Posterior state probabilities `Pr(S_k = i | all observations)`, one row per observation.
pub fn local_decode(model: &HmmModel, series: &ObservationSeries) -> Result<DMatrix<f64>> {
    let prepared = model.prepare()?;
    local_decode_prepared(model, &prepared, series)
}

pub(crate) fn local_decode_prepared(
    model: &HmmModel,
    prepared: &Prepared,
    series: &ObservationSeries,
) -> Result<DMatrix<f64>> {
    check_series(series, model.period())?;
    let name = model.process_name(series.condition.as_deref())?;
    let (tpm, _) = &prepared.schedules[name];
    let table = table_for(&model.emissions, [series]);
    let em = scaled_emissions(&model.emissions, table.as_deref(), series);
    let init = prepared.initial_at(name, series.start_phase);
    let fwd = forward(tpm, &init, &em, series.start_phase, true)?;

    let n = model.n_states();
    let t_len = series.len();
    let mut post = DMatrix::zeros(t_len, n);
    let mut beta = vec![1.0; n];
    let mut next = vec![0.0; n];
    for k in (0..t_len).rev() {
        if k + 1 < t_len {
            // beta_k(i) = sum_j G(i, j) e_{k+1}(j) beta_{k+1}(j)
            let g = tpm.matrix((series.start_phase + k) as i64);
            for (i, b) in next.iter_mut().enumerate() {
                *b = (0..n)
                    .map(|j| g[(i, j)] * em.probs[k + 1][j] * beta[j])
                    .sum();
            }
            let c: f64 = next.iter().sum();
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Numeric {
                    step: k + 1,
                    message: format!("backward normalizer is {c}"),
                });
            }
            for (b, x) in beta.iter_mut().zip(&next) {
                *b = x / c;
            }
        }
        let alpha = &fwd.alphas[k];
        let total: f64 = alpha.iter().zip(&beta).map(|(a, b)| a * b).sum();
        for i in 0..n {
            post[(k, i)] = alpha[i] * beta[i] / total;
        }
    }
    Ok(post)
}

/// States and counts drawn from a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub states: Vec<usize>,
    pub series: ObservationSeries,
}

/// Simulates `n_obs` steps of the (single or first) state process and its counts.
pub fn simulate(
    model: &HmmModel,
    n_obs: usize,
    start_phase: usize,
    seed: u64,
) -> Result<Simulation> {
    let name = model.processes.keys().next().expect("non-empty").clone();
    simulate_condition(model, &name, n_obs, start_phase, seed)
}

/// Simulation under a named condition; the returned series carries the condition tag
/// when the model has more than one.
pub fn simulate_condition(
    model: &HmmModel,
    condition: &str,
    n_obs: usize,
    start_phase: usize,
    seed: u64,
) -> Result<Simulation> {
    if n_obs < 1 {
        return Err(Error::arg("n_obs must be >= 1"));
    }
    let period = model.period();
    if start_phase < 1 || start_phase > period {
        return Err(Error::arg(format!(
            "start phase {start_phase} outside 1..={period}"
        )));
    }
    let process = model
        .processes
        .get(condition)
        .ok_or_else(|| Error::arg(format!("unknown condition {condition:?}")))?;
    let tpm = process.tpm();
    let n = model.n_states();
    let initial = match &model.initial {
        InitialPolicy::PeriodicStationary => {
            stationary_exact(&tpm)?.at(start_phase as i64).to_vec()
        }
        InitialPolicy::Uniform => vec![1.0 / n as f64; n],
        InitialPolicy::Fixed { probs } => probs.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = Vec::with_capacity(n_obs);
    let mut values = Vec::with_capacity(n_obs);
    let mut state = sample_categorical(&mut rng, initial.iter().copied());
    for k in 0..n_obs {
        if k > 0 {
            state = step(&mut rng, tpm.matrix((start_phase + k - 1) as i64), state);
        }
        states.push(state);
        values.push(Some(model.emissions.sample(state, &mut rng)));
    }
    let mut series = ObservationSeries::new(format!("sim-{seed}"), start_phase, values);
    if model.processes.len() > 1 {
        series.condition = Some(condition.to_string());
    }
    Ok(Simulation { states, series })
}
