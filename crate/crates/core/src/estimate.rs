//! Maximum-likelihood fitting and Monte Carlo uncertainty for derived quantities.
//!
//! Parameters are optimized on an unconstrained working scale: link coefficients as they
//! are, emission means and dispersions on the log scale. The optimizer is BFGS on the
//! negative log-likelihood with central finite-difference gradients and a backtracking
//! line search. After convergence states are relabeled so emission means ascend.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dwell;
use crate::error::{Error, Result};
use crate::hmm::{
    log_likelihood_prepared, EmissionFamily, HmmModel, ObservationSeries, StateProcess,
};
use crate::stationary::{stationary_exact, stationary_hypothetical};

/// Relative step of the central-difference gradient.
pub const GRADIENT_STEP: f64 = 1e-6;

/// Relative step of the finite-difference Hessian.
pub const HESSIAN_STEP: f64 = 1e-4;

/// Largest coordinate change allowed in one line-search trial step.
const MAX_STEP: f64 = 5.0;

/// Flat vector of unconstrained parameters.
///
/// Layout: for each condition (in name order) every off-diagonal pair's link coefficients
/// in pair order, then `log mu_i` for each state, then `log phi_i` for negative binomial
/// emissions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkingParams(pub Vec<f64>);

impl WorkingParams {
    pub fn from_model(model: &HmmModel) -> Result<Self> {
        let mut out = Vec::new();
        for (name, process) in model.processes() {
            match process {
                StateProcess::Link(link) => out.extend(link.flat_coefficients()),
                StateProcess::Schedule(_) => {
                    return Err(Error::arg(format!(
                        "condition {name:?} uses a fixed schedule; only link-based processes can be fitted"
                    )))
                }
            }
        }
        let em = model.emissions();
        out.extend(em.means().iter().map(|m| m.ln()));
        out.extend(em.dispersions().iter().map(|p| p.ln()));
        Ok(Self(out))
    }

    /// Rebuilds a model shaped like `template`. State order is not validated.
    pub fn to_model(&self, template: &HmmModel) -> Result<HmmModel> {
        let expected = n_working(template);
        if self.0.len() != expected {
            return Err(Error::arg(format!(
                "expected {expected} working parameters, got {}",
                self.0.len()
            )));
        }
        if self.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("working parameters must be finite"));
        }
        let mut rest = self.0.as_slice();
        let mut processes = BTreeMap::new();
        for (name, process) in template.processes() {
            let StateProcess::Link(link) = process else {
                return Err(Error::arg("only link-based processes can be fitted"));
            };
            let mut link = link.clone();
            let (head, tail) = rest.split_at(link.n_coefficients());
            link.set_flat_coefficients(head)?;
            rest = tail;
            processes.insert(name.clone(), StateProcess::Link(link));
        }
        let n = template.n_states();
        let means = rest[..n].iter().map(|v| v.exp()).collect();
        let dispersions = rest[n..].iter().map(|v| v.exp()).collect();
        let emissions = template.emissions().with_params(means, dispersions);
        Ok(HmmModel::from_parts_unchecked(
            processes,
            emissions,
            template.initial().clone(),
        ))
    }
}

fn n_working(model: &HmmModel) -> usize {
    let links: usize = model
        .processes()
        .values()
        .map(|p| match p {
            StateProcess::Link(l) => l.n_coefficients(),
            StateProcess::Schedule(_) => 0,
        })
        .sum();
    let n = model.n_states();
    links
        + n
        + match model.emissions().family() {
            EmissionFamily::NegativeBinomial => n,
            EmissionFamily::Poisson => 0,
        }
}

/// Human-readable names of the working parameters, e.g. `default.b12[0]`, `log_mu2`.
pub fn parameter_names(model: &HmmModel) -> Vec<String> {
    let mut names = Vec::new();
    for (cond, process) in model.processes() {
        if let StateProcess::Link(link) = process {
            let k = link.n_harmonics();
            for (i, j) in link.pairs() {
                names.push(format!("{cond}.b{}{}[0]", i + 1, j + 1));
                for h in 1..=k {
                    names.push(format!("{cond}.b{}{}[sin{h}]", i + 1, j + 1));
                }
                for h in 1..=k {
                    names.push(format!("{cond}.b{}{}[cos{h}]", i + 1, j + 1));
                }
            }
        }
    }
    let n = model.n_states();
    names.extend((1..=n).map(|i| format!("log_mu{i}")));
    if model.emissions().family() == EmissionFamily::NegativeBinomial {
        names.extend((1..=n).map(|i| format!("log_phi{i}")));
    }
    names
}

/// Where the optimizer starts.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum StartPoint {
    /// Intercepts -2, harmonics 0, means at data quantiles, dispersions 1.
    #[default]
    Default,
    /// The template's own parameter values.
    Template,
    Working(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the gradient max-norm (working scale).
    pub tolerance: f64,
    pub start: StartPoint,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-4,
            start: StartPoint::Default,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    /// The line search could not decrease the objective before the gradient test passed.
    Stalled,
    /// Iteration limit reached.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub status: FitStatus,
    pub iterations: usize,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: HmmModel,
    pub log_likelihood: f64,
    pub working: WorkingParams,
    /// Hessian of the negative log-likelihood at the optimum, working scale.
    pub hessian: DMatrix<f64>,
    pub convergence: Convergence,
}

impl FitResult {
    pub fn n_parameters(&self) -> usize {
        self.working.0.len()
    }

    pub fn parameter_names(&self) -> Vec<String> {
        parameter_names(&self.model)
    }

    /// Inverse Hessian, if the Hessian is positive definite.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        let chol = self.hessian.clone().cholesky().ok_or_else(not_pd)?;
        Ok(chol.inverse())
    }

    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        let cov = self.covariance().ok()?;
        Some((0..cov.nrows()).map(|i| cov[(i, i)].sqrt()).collect())
    }
}

fn not_pd() -> Error {
    Error::Uncertainty(
        "Hessian is not positive definite; the normal approximation is unavailable \
         (consider profile-likelihood intervals instead)"
            .into(),
    )
}

#[derive(Serialize, Deserialize)]
struct ParameterEntry {
    name: String,
    estimate: f64,
    std_error: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct FitReport {
    log_likelihood: f64,
    n_parameters: usize,
    convergence: Convergence,
    parameters: Vec<ParameterEntry>,
    model: HmmModel,
    hessian: Vec<Vec<f64>>,
}

impl Serialize for FitResult {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let se = self.standard_errors();
        let parameters = self
            .parameter_names()
            .into_iter()
            .zip(&self.working.0)
            .enumerate()
            .map(|(k, (name, &estimate))| ParameterEntry {
                name,
                estimate,
                std_error: se.as_ref().map(|s| s[k]),
            })
            .collect();
        let hessian = (0..self.hessian.nrows())
            .map(|i| self.hessian.row(i).iter().copied().collect())
            .collect();
        FitReport {
            log_likelihood: self.log_likelihood,
            n_parameters: self.n_parameters(),
            convergence: self.convergence.clone(),
            parameters,
            model: self.model.clone(),
            hessian,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FitResult {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let report = FitReport::deserialize(deserializer)?;
        let working = WorkingParams::from_model(&report.model).map_err(D::Error::custom)?;
        let n = working.0.len();
        if report.hessian.len() != n || report.hessian.iter().any(|r| r.len() != n) {
            return Err(D::Error::custom(format!("hessian must be {n}x{n}")));
        }
        let hessian = DMatrix::from_fn(n, n, |i, j| report.hessian[i][j]);
        Ok(FitResult {
            model: report.model,
            log_likelihood: report.log_likelihood,
            working,
            hessian,
            convergence: report.convergence,
        })
    }
}

/// Negative log-likelihood on the working scale; `+inf` where the model is invalid.
struct Objective<'a> {
    template: &'a HmmModel,
    data: &'a [ObservationSeries],
}

impl Objective<'_> {
    fn value(&self, theta: &[f64]) -> f64 {
        let model = match WorkingParams(theta.to_vec()).to_model(self.template) {
            Ok(m) => m,
            Err(_) => return f64::INFINITY,
        };
        let ll = model
            .prepare()
            .and_then(|p| log_likelihood_prepared(&model, &p, self.data));
        match ll {
            Ok(v) if v.is_finite() => -v,
            _ => f64::INFINITY,
        }
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        central_gradient(|x| self.value(x), theta)
    }
}

/// Central differences with step `GRADIENT_STEP * max(1, |x_i|)`.
pub fn central_gradient<F>(f: F, x: &[f64]) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    (0..x.len())
        .into_par_iter()
        .map(|i| {
            let h = GRADIENT_STEP * x[i].abs().max(1.0);
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[i] += h;
            down[i] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

/// Finite-difference Hessian from function values, step `HESSIAN_STEP * max(1, |x_i|)`.
pub fn fd_hessian<F>(f: F, x: &[f64]) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| HESSIAN_STEP * v.abs().max(1.0)).collect();
    let f0 = f(x);
    let shifted = |moves: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(i, d) in moves {
            y[i] += d;
        }
        f(&y)
    };
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let entries: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            if i == j {
                (shifted(&[(i, h[i])]) - 2.0 * f0 + shifted(&[(i, -h[i])])) / (h[i] * h[i])
            } else {
                (shifted(&[(i, h[i]), (j, h[j])])
                    - shifted(&[(i, h[i]), (j, -h[j])])
                    - shifted(&[(i, -h[i]), (j, h[j])])
                    + shifted(&[(i, -h[i]), (j, -h[j])]))
                    / (4.0 * h[i] * h[j])
            }
        })
        .collect();
    let mut hess = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(entries) {
        hess[(i, j)] = v;
        hess[(j, i)] = v;
    }
    hess
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Minimum {
    x: Vec<f64>,
    f: f64,
    convergence: Convergence,
}

fn bfgs(objective: &Objective<'_>, start: Vec<f64>, options: &FitOptions) -> Result<Minimum> {
    let n = start.len();
    let mut x = start;
    let mut f = objective.value(&x);
    if !f.is_finite() {
        return Err(Error::Numeric {
            step: 0,
            message: "log-likelihood is not finite at the starting values".into(),
        });
    }
    let mut g = objective.gradient(&x);
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut iterations = 0;
    let mut idle = 0;
    let status = loop {
        if max_norm(&g) < options.tolerance {
            break FitStatus::Converged;
        }
        if iterations >= options.max_iterations {
            break FitStatus::Failed;
        }
        iterations += 1;

        let gv = DVector::from_column_slice(&g);
        let mut p: Vec<f64> = (-(&h_inv * &gv)).iter().copied().collect();
        if dot(&p, &g) >= 0.0 {
            h_inv = DMatrix::identity(n, n);
            fresh = true;
            p = g.iter().map(|v| -v).collect();
        }
        let longest = max_norm(&p);
        if longest > MAX_STEP {
            p.iter_mut().for_each(|v| *v *= MAX_STEP / longest);
        }
        let slope = dot(&p, &g);

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + alpha * b).collect();
            let ft = objective.value(&trial);
            if ft.is_finite() && ft <= f + 1e-4 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if fresh {
                break FitStatus::Stalled;
            }
            // retry from steepest descent before giving up
            h_inv = DMatrix::identity(n, n);
            fresh = true;
            continue;
        };
        let g_new = objective.gradient(&x_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if fresh {
                h_inv *= sy / dot(&y, &y);
            }
            let rho = 1.0 / sy;
            let sv = DVector::from_column_slice(&s);
            let yv = DVector::from_column_slice(&y);
            let hy = &h_inv * &yv;
            let yhy = yv.dot(&hy);
            // H+ = H - rho (H y s' + s y' H) + (rho^2 y'Hy + rho) s s'
            h_inv -= (&hy * sv.transpose() + &sv * hy.transpose()) * rho;
            h_inv += (&sv * sv.transpose()) * (rho * rho * yhy + rho);
            fresh = false;
        }
        // steps that only shuffle rounding noise around
        idle = if f - f_new <= 1e-13 * f.abs().max(1.0) {
            idle + 1
        } else {
            0
        };
        x = x_new;
        f = f_new;
        g = g_new;
        if idle >= 10 && max_norm(&g) >= options.tolerance {
            break FitStatus::Stalled;
        }
    };
    Ok(Minimum {
        x,
        f,
        convergence: Convergence {
            status,
            iterations,
            gradient_norm: max_norm(&g),
        },
    })
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Default starting values for `template` given the data.
pub fn default_start(template: &HmmModel, data: &[ObservationSeries]) -> Result<WorkingParams> {
    let mut counts: Vec<f64> = data
        .iter()
        .flat_map(|s| s.values.iter().flatten().map(|&c| c as f64))
        .collect();
    if counts.is_empty() || counts.iter().all(|&c| c == 0.0) {
        return Err(Error::data(
            "data carry no information on emission means (no observations or all counts zero)",
        ));
    }
    counts.sort_by(|a, b| a.total_cmp(b));
    let n = template.n_states();
    let mut means = Vec::with_capacity(n);
    for i in 0..n {
        let p = if n == 1 {
            0.5
        } else {
            0.25 + 0.5 * i as f64 / (n - 1) as f64
        };
        let mut m = quantile_sorted(&counts, p).max(0.1);
        if let Some(&prev) = means.last() {
            if m <= prev {
                m = prev + 1.0;
            }
        }
        means.push(m);
    }
    let mut theta = Vec::new();
    for process in template.processes().values() {
        if let StateProcess::Link(link) = process {
            let width = 1 + 2 * link.n_harmonics();
            for _ in link.pairs() {
                theta.push(-2.0);
                theta.extend(std::iter::repeat_n(0.0, width - 1));
            }
        }
    }
    theta.extend(means.iter().map(|m: &f64| m.ln()));
    if template.emissions().family() == EmissionFamily::NegativeBinomial {
        theta.extend(std::iter::repeat_n(0.0, n));
    }
    Ok(WorkingParams(theta))
}

fn ascending_permutation(means: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..means.len()).collect();
    order.sort_by(|&a, &b| means[a].total_cmp(&means[b]));
    // order[new] = old; invert to perm[old] = new
    let mut perm = vec![0; means.len()];
    for (new, &old) in order.iter().enumerate() {
        perm[old] = new;
    }
    perm
}

/// Maximum-likelihood fit of `template`'s parameters to `data`.
pub fn fit(
    data: &[ObservationSeries],
    template: &HmmModel,
    options: &FitOptions,
) -> Result<FitResult> {
    if data.is_empty() {
        return Err(Error::data("no series to fit"));
    }
    // also rejects fixed schedules
    let template_params = WorkingParams::from_model(template)?;
    let start = match &options.start {
        StartPoint::Default => default_start(template, data)?,
        StartPoint::Template => template_params,
        StartPoint::Working(v) => WorkingParams(v.clone()),
    };
    if start.0.len() != n_working(template) {
        return Err(Error::arg("start vector has the wrong length"));
    }
    // surface data problems as errors rather than an infinite objective
    let start_model = start.to_model(template)?;
    let prepared = start_model.prepare()?;
    log_likelihood_prepared(&start_model, &prepared, data)?;

    let objective = Objective { template, data };
    let minimum = bfgs(&objective, start.0, options)?;

    let mut model = WorkingParams(minimum.x.clone()).to_model(template)?;
    let perm = ascending_permutation(model.emissions().means());
    if perm.iter().enumerate().any(|(a, &b)| a != b) {
        model = model.permuted(&perm);
    }
    let working = WorkingParams::from_model(&model)?;
    let f = if working.0 == minimum.x {
        minimum.f
    } else {
        objective.value(&working.0)
    };
    let hessian = fd_hessian(|x| objective.value(x), &working.0);
    Ok(FitResult {
        model,
        log_likelihood: -f,
        working,
        hessian,
        convergence: minimum.convergence,
    })
}

/// Derived quantity evaluated under parameter uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub enum Functional {
    /// `delta_i(t)` for `t = 1..=L`.
    Delta {
        condition: Option<String>,
        state: usize,
    },
    /// `rho_i(t)` for `t = 1..=L`.
    Rho {
        condition: Option<String>,
        state: usize,
    },
    /// Mean dwell time of a stay entered at `t`, `t = 1..=L`.
    DwellMean {
        condition: Option<String>,
        state: usize,
    },
    /// Overall dwell pmf `d_i(r)`, `r = 1..=r_max`.
    DwellPmfOverall {
        condition: Option<String>,
        state: usize,
        r_max: usize,
    },
}

impl Functional {
    pub fn evaluate(&self, model: &HmmModel) -> Result<Vec<f64>> {
        match self {
            Functional::Delta { condition, state } => {
                let delta = stationary_exact(&model.tpm(condition.as_deref())?)?;
                Ok(delta.probs().iter().map(|p| p[*state]).collect())
            }
            Functional::Rho { condition, state } => {
                let rho = stationary_hypothetical(&model.tpm(condition.as_deref())?)?;
                Ok(rho.probs().iter().map(|p| p[*state]).collect())
            }
            Functional::DwellMean { condition, state } => {
                dwell::dwell_means(&model.tpm(condition.as_deref())?, *state)
            }
            Functional::DwellPmfOverall {
                condition,
                state,
                r_max,
            } => Ok(dwell::dwell_pmf_overall(
                &model.tpm(condition.as_deref())?,
                *state,
                Some(*r_max),
            )?
            .pmf),
        }
    }

    pub fn state(&self) -> usize {
        match self {
            Functional::Delta { state, .. }
            | Functional::Rho { state, .. }
            | Functional::DwellMean { state, .. }
            | Functional::DwellPmfOverall { state, .. } => *state,
        }
    }
}

/// Pointwise Monte Carlo bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    pub estimate: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    pub n_draws: usize,
}

/// Draws parameters from `N(theta_hat, H^-1)`, maps each draw through `functional` and
/// returns pointwise empirical quantiles at `(1 - level) / 2` and `(1 + level) / 2`.
///
/// Draw `k` uses stream `k` of a ChaCha generator seeded with `seed`.
pub fn mc_confidence(
    fit: &FitResult,
    functional: &Functional,
    n_draws: usize,
    level: f64,
    seed: u64,
) -> Result<Bands> {
    if n_draws < 1 {
        return Err(Error::arg("n_draws must be >= 1"));
    }
    if !(0.0..1.0).contains(&level) {
        return Err(Error::arg("level must lie in [0, 1)"));
    }
    if functional.state() >= fit.model.n_states() {
        return Err(Error::arg("functional state out of range"));
    }
    let chol = fit.hessian.clone().cholesky().ok_or_else(not_pd)?;
    let upper = chol.l().transpose();
    let n = fit.working.0.len();
    let center = DVector::from_column_slice(&fit.working.0);
    let estimate = functional.evaluate(&fit.model)?;

    let draws = (0..n_draws)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            // x = theta + U^-1 z has covariance (U'U)^-1 = H^-1
            let offset = upper.solve_upper_triangular(&z).ok_or_else(not_pd)?;
            let theta: Vec<f64> = (&center + offset).iter().copied().collect();
            let model = WorkingParams(theta).to_model(&fit.model)?;
            functional.evaluate(&model)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;

    let points = estimate.len();
    let lo_p = (1.0 - level) / 2.0;
    let hi_p = (1.0 + level) / 2.0;
    let mut lower = Vec::with_capacity(points);
    let mut upper_band = Vec::with_capacity(points);
    for j in 0..points {
        let mut column: Vec<f64> = draws.iter().map(|d| d[j]).collect();
        column.sort_by(|a, b| a.total_cmp(b));
        lower.push(quantile_sorted(&column, lo_p));
        upper_band.push(quantile_sorted(&column, hi_p));
    }
    Ok(Bands {
        estimate,
        lower,
        upper: upper_band,
        level,
        n_draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::{simulate, EmissionSpec};
    use crate::link::TrigLinkSpec;
    use approx::assert_abs_diff_eq;

    fn model() -> HmmModel {
        let link = TrigLinkSpec::two_state(24, &[-1.2, 0.85, 0.15], &[-1.5, -0.7, -1.3]).unwrap();
        let em = EmissionSpec::negative_binomial(vec![2.0, 20.0], vec![1.5, 3.0]).unwrap();
        HmmModel::with_link(link, em).unwrap()
    }

    #[test]
    fn working_round_trip() {
        let m = model();
        let w = WorkingParams::from_model(&m).unwrap();
        assert_eq!(w.0.len(), 10);
        assert_eq!(parameter_names(&m).len(), 10);
        let back = w.to_model(&m).unwrap();
        let w2 = WorkingParams::from_model(&back).unwrap();
        for (a, b) in w.0.iter().zip(&w2.0) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        for (a, b) in back.emissions().means().iter().zip(m.emissions().means()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn working_rejects_wrong_length() {
        assert!(WorkingParams(vec![0.0; 3]).to_model(&model()).is_err());
    }

    #[test]
    fn permutation_is_computed_from_means() {
        assert_eq!(ascending_permutation(&[5.0, 1.0, 3.0]), vec![2, 0, 1]);
    }

    #[test]
    fn hessian_of_quadratic() {
        let f = |x: &[f64]| 3.0 * x[0] * x[0] + x[0] * x[1] + 2.0 * x[1] * x[1];
        let h = fd_hessian(f, &[0.3, -1.2]);
        assert_abs_diff_eq!(h[(0, 0)], 6.0, epsilon = 1e-5);
        assert_abs_diff_eq!(h[(0, 1)], 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(h[(1, 1)], 4.0, epsilon = 1e-5);
        let g = central_gradient(f, &[0.3, -1.2]);
        assert_abs_diff_eq!(g[0], 6.0 * 0.3 - 1.2, epsilon = 1e-8);
    }

    #[test]
    fn zero_counts_are_degenerate() {
        let data = vec![ObservationSeries::from_counts("z", 1, &[0; 50])];
        assert!(matches!(
            fit(&data, &model(), &FitOptions::default()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn single_draw_zero_level() {
        let m = model();
        let data: Vec<_> = (0..3)
            .map(|s| simulate(&m, 480, 1, s).unwrap().series)
            .collect();
        let fitted = fit(
            &data,
            &m,
            &FitOptions {
                start: StartPoint::Template,
                ..Default::default()
            },
        )
        .unwrap();
        let func = Functional::Delta {
            condition: None,
            state: 1,
        };
        let bands = mc_confidence(&fitted, &func, 1, 0.0, 4).unwrap();
        assert_eq!(bands.lower, bands.upper);
        let again = mc_confidence(&fitted, &func, 1, 0.0, 4).unwrap();
        assert_eq!(bands, again);
    }

    #[test]
    fn non_pd_hessian_is_rejected() {
        let m = model();
        let n = n_working(&m);
        let result = FitResult {
            working: WorkingParams::from_model(&m).unwrap(),
            model: m,
            log_likelihood: 0.0,
            hessian: -DMatrix::identity(n, n),
            convergence: Convergence {
                status: FitStatus::Converged,
                iterations: 0,
                gradient_norm: 0.0,
            },
        };
        let func = Functional::Delta {
            condition: None,
            state: 0,
        };
        assert!(matches!(
            mc_confidence(&result, &func, 10, 0.9, 1),
            Err(Error::Uncertainty(_))
        ));
    }
}
