#![allow(dead_code)]

use nalgebra::DMatrix;
use phmm::hmm::{EmissionSpec, HmmModel};
use phmm::{presets, PeriodicTpm};
use rand::Rng;

/// Random stochastic matrix with entries bounded away from zero.
pub fn random_matrix<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(n, n, |_, _| rng.random_range(0.05..1.0));
    for mut row in m.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    m
}

pub fn random_tpm<R: Rng>(n: usize, period: usize, rng: &mut R) -> PeriodicTpm {
    PeriodicTpm::new((0..period).map(|_| random_matrix(n, rng)).collect()).unwrap()
}

/// Counts with overlapping but distinguishable states.
pub fn nb_emissions() -> EmissionSpec {
    EmissionSpec::negative_binomial(vec![2.0, 20.0], vec![1.5, 3.0]).unwrap()
}

pub fn dwell_means_model() -> HmmModel {
    HmmModel::with_link(presets::dwell_means_example(), nb_emissions()).unwrap()
}

pub fn multimodal_model() -> HmmModel {
    HmmModel::with_link(presets::multimodal_dwell_example(), nb_emissions()).unwrap()
}

/// Total variation distance over a common support.
pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
