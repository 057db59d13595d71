//! Trigonometric multinomial-logit link and the periodic transition-matrix schedule.
//!
//! Time indices are 1-based over `1..=L`; any integer index is mapped back onto the
//! cycle with [`cycle_position`]. State indices are 0-based in the Rust API and 1-based
//! in serialized documents (the `"12"` key names the pair from state 1 to state 2).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear predictors are clamped to this magnitude before exponentiation.
pub const ETA_CLAMP: f64 = 709.0;

const ROW_SUM_TOL: f64 = 1e-10;

/// Maps any integer time index onto the cycle `1..=period`.
pub fn cycle_position(t: i64, period: usize) -> usize {
    (t - 1).rem_euclid(period as i64) as usize + 1
}

/// Coefficients of the trigonometric logit link.
///
/// For each ordered off-diagonal pair `(i, j)` the vector holds
/// `(b0, s_1..s_K, c_1..c_K)` and the linear predictor at time `t` is
/// `b0 + sum_k s_k sin(2 pi k t / L) + sum_k c_k cos(2 pi k t / L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigLinkSpec {
    n_states: usize,
    period: usize,
    n_harmonics: usize,
    /// Row-major over off-diagonal pairs, see [`TrigLinkSpec::pair_index`].
    coeffs: Vec<Vec<f64>>,
}

impl TrigLinkSpec {
    pub fn new(
        n_states: usize,
        period: usize,
        n_harmonics: usize,
        coeffs: BTreeMap<(usize, usize), Vec<f64>>,
    ) -> Result<Self> {
        if n_states < 2 {
            return Err(Error::arg(format!("n_states must be >= 2, got {n_states}")));
        }
        if period < 1 {
            return Err(Error::arg("period must be >= 1"));
        }
        let expected = n_states * (n_states - 1);
        if coeffs.len() != expected {
            return Err(Error::arg(format!(
                "expected {expected} coefficient vectors, got {}",
                coeffs.len()
            )));
        }
        let mut flat = vec![Vec::new(); expected];
        for ((i, j), beta) in coeffs {
            if i >= n_states || j >= n_states || i == j {
                return Err(Error::arg(format!("invalid state pair ({i}, {j})")));
            }
            if beta.len() != 1 + 2 * n_harmonics {
                return Err(Error::arg(format!(
                    "pair ({}, {}) has {} coefficients, expected {}",
                    i + 1,
                    j + 1,
                    beta.len(),
                    1 + 2 * n_harmonics
                )));
            }
            if beta.iter().any(|b| !b.is_finite()) {
                return Err(Error::arg(format!(
                    "pair ({}, {}) has non-finite coefficients",
                    i + 1,
                    j + 1
                )));
            }
            flat[Self::pair_index_for(n_states, i, j)] = beta;
        }
        Ok(Self {
            n_states,
            period,
            n_harmonics,
            coeffs: flat,
        })
    }

    /// Two-state convenience constructor taking the `1 -> 2` and `2 -> 1` vectors.
    pub fn two_state(period: usize, beta_12: &[f64], beta_21: &[f64]) -> Result<Self> {
        if beta_12.is_empty() || beta_12.len().is_multiple_of(2) {
            return Err(Error::arg(
                "coefficient vectors must have odd length 1 + 2K",
            ));
        }
        let k = (beta_12.len() - 1) / 2;
        let mut coeffs = BTreeMap::new();
        coeffs.insert((0, 1), beta_12.to_vec());
        coeffs.insert((1, 0), beta_21.to_vec());
        Self::new(2, period, k, coeffs)
    }

    /// Every off-diagonal predictor equal to `intercept`, no harmonics.
    pub fn constant(n_states: usize, period: usize, intercept: f64) -> Result<Self> {
        Self::with_intercepts(n_states, period, 0, intercept)
    }

    /// Intercepts at `intercept`, all harmonic coefficients zero.
    pub fn with_intercepts(
        n_states: usize,
        period: usize,
        n_harmonics: usize,
        intercept: f64,
    ) -> Result<Self> {
        let mut coeffs = BTreeMap::new();
        for i in 0..n_states {
            for j in (0..n_states).filter(|&j| j != i) {
                let mut beta = vec![0.0; 1 + 2 * n_harmonics];
                beta[0] = intercept;
                coeffs.insert((i, j), beta);
            }
        }
        Self::new(n_states, period, n_harmonics, coeffs)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn n_harmonics(&self) -> usize {
        self.n_harmonics
    }

    /// Number of free coefficients across all pairs.
    pub fn n_coefficients(&self) -> usize {
        self.coeffs.len() * (1 + 2 * self.n_harmonics)
    }

    fn pair_index_for(n: usize, i: usize, j: usize) -> usize {
        i * (n - 1) + if j > i { j - 1 } else { j }
    }

    /// Position of the ordered pair `(i, j)` in [`TrigLinkSpec::pairs`].
    pub fn pair_index(&self, i: usize, j: usize) -> usize {
        Self::pair_index_for(self.n_states, i, j)
    }

    /// Off-diagonal pairs in storage order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n_states;
        (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
    }

    pub fn coefficients(&self, i: usize, j: usize) -> &[f64] {
        &self.coeffs[self.pair_index(i, j)]
    }

    pub fn coefficients_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let idx = self.pair_index(i, j);
        &mut self.coeffs[idx]
    }

    /// All coefficients flattened in pair order.
    pub fn flat_coefficients(&self) -> Vec<f64> {
        self.coeffs.iter().flatten().copied().collect()
    }

    /// Inverse of [`TrigLinkSpec::flat_coefficients`].
    pub fn set_flat_coefficients(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.n_coefficients() {
            return Err(Error::arg(format!(
                "expected {} coefficients, got {}",
                self.n_coefficients(),
                values.len()
            )));
        }
        let width = 1 + 2 * self.n_harmonics;
        for (beta, chunk) in self.coeffs.iter_mut().zip(values.chunks(width)) {
            beta.copy_from_slice(chunk);
        }
        Ok(())
    }

    /// Same link with the harmonics dropped (intercepts kept).
    pub fn homogeneous(&self) -> Self {
        let coeffs = self.coeffs.iter().map(|b| vec![b[0]]).collect();
        Self {
            n_states: self.n_states,
            period: self.period,
            n_harmonics: 0,
            coeffs,
        }
    }

    /// Relabels states: new state `perm[old]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        for (i, j) in self.pairs() {
            let dst = out.pair_index(perm[i], perm[j]);
            out.coeffs[dst] = self.coefficients(i, j).to_vec();
        }
        out
    }

    /// Linear predictor for the transition `i -> j` at time `t` (1-based, `1..=L`).
    pub fn linear_predictor(&self, i: usize, j: usize, t: usize) -> Result<f64> {
        if t < 1 || t > self.period {
            return Err(Error::arg(format!(
                "time index {t} outside 1..={}",
                self.period
            )));
        }
        if i == j || i >= self.n_states || j >= self.n_states {
            return Err(Error::arg(format!("invalid state pair ({i}, {j})")));
        }
        Ok(self.eta(self.coefficients(i, j), t as f64))
    }

    fn eta(&self, beta: &[f64], t: f64) -> f64 {
        let k_max = self.n_harmonics;
        let mut eta = beta[0];
        for k in 1..=k_max {
            let angle = 2.0 * PI * k as f64 * t / self.period as f64;
            eta += beta[k] * angle.sin() + beta[k_max + k] * angle.cos();
        }
        eta
    }

    /// Transition matrix at time `t`; `t` may be any integer and is reduced onto the cycle.
    pub fn tpm_at(&self, t: i64) -> DMatrix<f64> {
        let pos = cycle_position(t, self.period) as f64;
        let n = self.n_states;
        let mut m = DMatrix::zeros(n, n);
        let mut etas = vec![0.0; n];
        for i in 0..n {
            for (j, eta) in etas.iter_mut().enumerate() {
                *eta = if i == j {
                    0.0
                } else {
                    self.eta(self.coefficients(i, j), pos)
                        .clamp(-ETA_CLAMP, ETA_CLAMP)
                };
            }
            // softmax with the diagonal as reference category
            let max = etas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = etas.iter().map(|e| (e - max).exp()).sum();
            for j in 0..n {
                m[(i, j)] = (etas[j] - max).exp() / denom;
            }
        }
        m
    }

    /// All `L` transition matrices.
    pub fn build_tpm(&self) -> PeriodicTpm {
        let matrices = (1..=self.period as i64).map(|t| self.tpm_at(t)).collect();
        PeriodicTpm {
            n_states: self.n_states,
            matrices,
        }
    }
}

/// Standard logistic function.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The `L` unique transition matrices of a periodically inhomogeneous chain.
///
/// `matrix(t)` governs the move from time `t` to time `t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicTpm {
    n_states: usize,
    matrices: Vec<DMatrix<f64>>,
}

impl PeriodicTpm {
    pub fn new(matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = matrices
            .first()
            .ok_or_else(|| Error::arg("a periodic schedule needs at least one matrix"))?;
        let n = first.nrows();
        if n < 1 {
            return Err(Error::arg("matrices must have at least one state"));
        }
        for (idx, m) in matrices.iter().enumerate() {
            let t = idx + 1;
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::arg(format!("matrix at t = {t} is not {n}x{n}")));
            }
            for i in 0..n {
                let row = m.row(i);
                if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return Err(Error::arg(format!(
                        "matrix at t = {t}, row {} has entries outside [0, 1]",
                        i + 1
                    )));
                }
                if (row.sum() - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::arg(format!(
                        "matrix at t = {t}, row {} sums to {}",
                        i + 1,
                        row.sum()
                    )));
                }
            }
        }
        Ok(Self {
            n_states: n,
            matrices,
        })
    }

    /// The same matrix at every one of `period` time points.
    pub fn homogeneous(matrix: DMatrix<f64>, period: usize) -> Result<Self> {
        Self::new(vec![matrix; period.max(1)])
    }

    /// Builds a schedule from row-major nested rows.
    pub fn from_rows(rows: &[Vec<Vec<f64>>]) -> Result<Self> {
        let matrices = rows
            .iter()
            .map(|m| {
                let n = m.len();
                if m.iter().any(|r| r.len() != n) {
                    return Err(Error::arg("transition matrices must be square"));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| m[i][j]))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(matrices)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn period(&self) -> usize {
        self.matrices.len()
    }

    /// Matrix at time `t`, reduced onto the cycle (so `t = 0` is `t = L`).
    pub fn matrix(&self, t: i64) -> &DMatrix<f64> {
        &self.matrices[cycle_position(t, self.period()) - 1]
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    /// Diagonal entry `gamma_ii` at time `t`.
    pub fn stay(&self, i: usize, t: i64) -> f64 {
        self.matrix(t)[(i, i)]
    }

    pub fn is_homogeneous(&self) -> bool {
        self.matrices.windows(2).all(|w| w[0] == w[1])
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n_states;
        let matrices = self
            .matrices
            .iter()
            .map(|m| {
                let mut out = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        out[(perm[i], perm[j])] = m[(i, j)];
                    }
                }
                out
            })
            .collect();
        Self {
            n_states: n,
            matrices,
        }
    }

    fn to_rows(&self) -> Vec<Vec<Vec<f64>>> {
        self.matrices
            .iter()
            .map(|m| {
                (0..m.nrows())
                    .map(|i| m.row(i).iter().copied().collect())
                    .collect()
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TrigLinkDoc {
    n_states: usize,
    period: usize,
    n_harmonics: usize,
    coeffs: BTreeMap<String, Vec<f64>>,
}

fn pair_key(n: usize, i: usize, j: usize) -> String {
    if n < 10 {
        format!("{}{}", i + 1, j + 1)
    } else {
        format!("{},{}", i + 1, j + 1)
    }
}

fn parse_pair_key(key: &str) -> Option<(usize, usize)> {
    let (a, b) = match key.split_once(',') {
        Some((a, b)) => (a.trim(), b.trim()),
        None if key.len() == 2 && key.is_ascii() => (&key[..1], &key[1..]),
        None => return None,
    };
    let i: usize = a.parse().ok()?;
    let j: usize = b.parse().ok()?;
    (i >= 1 && j >= 1).then(|| (i - 1, j - 1))
}

impl Serialize for TrigLinkSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let coeffs = self
            .pairs()
            .map(|(i, j)| {
                (
                    pair_key(self.n_states, i, j),
                    self.coefficients(i, j).to_vec(),
                )
            })
            .collect();
        TrigLinkDoc {
            n_states: self.n_states,
            period: self.period,
            n_harmonics: self.n_harmonics,
            coeffs,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TrigLinkSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = TrigLinkDoc::deserialize(deserializer)?;
        let mut coeffs = BTreeMap::new();
        for (key, beta) in doc.coeffs {
            let pair = parse_pair_key(&key)
                .ok_or_else(|| de::Error::custom(format!("bad pair key {key:?}")))?;
            coeffs.insert(pair, beta);
        }
        TrigLinkSpec::new(doc.n_states, doc.period, doc.n_harmonics, coeffs)
            .map_err(de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct PeriodicTpmDoc {
    matrices: Vec<Vec<Vec<f64>>>,
}

impl Serialize for PeriodicTpm {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        PeriodicTpmDoc {
            matrices: self.to_rows(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PeriodicTpm {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = PeriodicTpmDoc::deserialize(deserializer)?;
        PeriodicTpm::from_rows(&doc.matrices).map_err(de::Error::custom)
    }
}

impl fmt::Display for TrigLinkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-state trigonometric link, L = {}, K = {}",
            self.n_states, self.period, self.n_harmonics
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn scenario_1() -> TrigLinkSpec {
        TrigLinkSpec::two_state(24, &[-2.0, -1.0, -1.0], &[-2.0, 2.0, 2.0]).unwrap()
    }

    #[test]
    fn predictor_at_end_of_cycle() {
        let eta = scenario_1().linear_predictor(0, 1, 24).unwrap();
        assert_abs_diff_eq!(eta, -3.0, epsilon = 1e-12);
    }

    #[test]
    fn predictor_at_quarter_cycle() {
        let eta = scenario_1().linear_predictor(1, 0, 6).unwrap();
        assert_abs_diff_eq!(eta, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn predictor_without_harmonic_weight_is_intercept() {
        let spec = TrigLinkSpec::two_state(24, &[0.7, 0.0, 0.0], &[0.7, 0.0, 0.0]).unwrap();
        for t in 1..=24 {
            assert_eq!(spec.linear_predictor(0, 1, t).unwrap(), 0.7);
        }
    }

    #[test]
    fn predictor_rejects_bad_arguments() {
        let spec = scenario_1();
        assert!(matches!(
            spec.linear_predictor(0, 1, 0),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            spec.linear_predictor(0, 1, 25),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            spec.linear_predictor(1, 1, 3),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn scenario_1_switch_probability_at_24() {
        let tpm = scenario_1().build_tpm();
        // logistic(-3) = 1 / (1 + e^3)
        assert_abs_diff_eq!(
            tpm.matrix(24)[(0, 1)],
            0.047_425_873_177_566_78,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            tpm.matrix(24)[(0, 0)],
            1.0 - 0.047_425_873_177_566_78,
            epsilon = 1e-12
        );
    }

    #[test]
    fn zero_coefficients_give_uniform_rows() {
        let two = TrigLinkSpec::constant(2, 5, 0.0).unwrap().build_tpm();
        for m in two.matrices() {
            assert!(m.iter().all(|&p| p == 0.5));
        }
        let three = TrigLinkSpec::constant(3, 4, 0.0).unwrap().build_tpm();
        for m in three.matrices() {
            for &p in m.iter() {
                assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn extreme_predictors_stay_finite() {
        let spec = TrigLinkSpec::two_state(3, &[1e6], &[-1e6]).unwrap();
        let tpm = spec.build_tpm();
        for m in tpm.matrices() {
            assert!(m.iter().all(|p| p.is_finite()));
            assert_abs_diff_eq!(m[(0, 1)], 1.0, epsilon = 1e-300);
            assert!(m[(1, 0)] > 0.0);
        }
    }

    #[test]
    fn spec_validation() {
        let mut coeffs = BTreeMap::new();
        coeffs.insert((0, 1), vec![0.0, 1.0, 2.0]);
        assert!(TrigLinkSpec::new(2, 24, 1, coeffs.clone()).is_err());
        coeffs.insert((1, 0), vec![0.0, 1.0]);
        assert!(TrigLinkSpec::new(2, 24, 1, coeffs.clone()).is_err());
        coeffs.insert((1, 0), vec![0.0, f64::NAN, 1.0]);
        assert!(TrigLinkSpec::new(2, 24, 1, coeffs).is_err());
        assert!(TrigLinkSpec::constant(1, 24, 0.0).is_err());
    }

    #[test]
    fn json_layout() {
        let json = serde_json::to_value(scenario_1()).unwrap();
        assert_eq!(json["n_states"], 2);
        assert_eq!(json["period"], 24);
        assert_eq!(json["n_harmonics"], 1);
        assert_eq!(json["coeffs"]["12"], serde_json::json!([-2.0, -1.0, -1.0]));
        assert_eq!(json["coeffs"]["21"], serde_json::json!([-2.0, 2.0, 2.0]));
        let back: TrigLinkSpec = serde_json::from_value(json).unwrap();
        assert_eq!(back, scenario_1());
    }

    #[test]
    fn json_rejects_bad_keys() {
        let doc = r#"{"n_states":2,"period":4,"n_harmonics":0,"coeffs":{"12":[0],"2x":[0]}}"#;
        assert!(serde_json::from_str::<TrigLinkSpec>(doc).is_err());
    }

    #[test]
    fn permutation_swaps_pairs() {
        let spec = scenario_1();
        let swapped = spec.permuted(&[1, 0]);
        assert_eq!(swapped.coefficients(1, 0), spec.coefficients(0, 1));
        let a = spec.build_tpm();
        let b = swapped.build_tpm();
        assert_eq!(a.permuted(&[1, 0]), b);
    }

    #[test]
    fn tpm_rejects_non_stochastic_rows() {
        let bad = DMatrix::from_row_slice(2, 2, &[0.5, 0.6, 0.5, 0.5]);
        assert!(PeriodicTpm::new(vec![bad]).is_err());
        let neg = DMatrix::from_row_slice(2, 2, &[1.5, -0.5, 0.5, 0.5]);
        assert!(PeriodicTpm::new(vec![neg]).is_err());
        assert!(PeriodicTpm::new(vec![]).is_err());
    }

    fn arb_spec() -> impl Strategy<Value = TrigLinkSpec> {
        (2usize..5, 1usize..30, 0usize..4).prop_flat_map(|(n, l, k)| {
            let width = 1 + 2 * k;
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, width), n * (n - 1)).prop_map(
                move |vs| {
                    let mut spec = TrigLinkSpec::with_intercepts(n, l, k, 0.0).unwrap();
                    let flat: Vec<f64> = vs.into_iter().flatten().collect();
                    spec.set_flat_coefficients(&flat).unwrap();
                    spec
                },
            )
        })
    }

    proptest! {
        #[test]
        fn rows_are_stochastic(spec in arb_spec()) {
            let tpm = spec.build_tpm();
            for m in tpm.matrices() {
                for i in 0..m.nrows() {
                    prop_assert!((m.row(i).sum() - 1.0).abs() <= 1e-12);
                    prop_assert!(m.row(i).iter().all(|&p| (0.0..=1.0).contains(&p)));
                }
            }
        }

        #[test]
        fn schedule_is_periodic(spec in arb_spec(), t in 1i64..200) {
            let l = spec.period() as i64;
            prop_assert_eq!(spec.tpm_at(t), spec.tpm_at(t + l));
            prop_assert_eq!(spec.tpm_at(t), spec.tpm_at(t - l));
        }

        #[test]
        fn no_harmonics_means_homogeneous(spec in arb_spec()) {
            let tpm = spec.homogeneous().build_tpm();
            prop_assert!(tpm.is_homogeneous());
        }

        #[test]
        fn intercept_is_monotone(spec in arb_spec(), bump in 0.01f64..3.0) {
            prop_assume!(spec.n_states() == 2);
            let mut higher = spec.clone();
            higher.coefficients_mut(0, 1)[0] += bump;
            let lo = spec.build_tpm();
            let hi = higher.build_tpm();
            for t in 1..=spec.period() as i64 {
                prop_assert!(hi.matrix(t)[(0, 1)] > lo.matrix(t)[(0, 1)]);
            }
        }

        #[test]
        fn flat_coefficients_round_trip(spec in arb_spec()) {
            let mut copy = TrigLinkSpec::with_intercepts(
                spec.n_states(), spec.period(), spec.n_harmonics(), 0.0).unwrap();
            copy.set_flat_coefficients(&spec.flat_coefficients()).unwrap();
            prop_assert_eq!(copy, spec);
        }
    }
}
