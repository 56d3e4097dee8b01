#![allow(dead_code)]

use alphacross_core::{FactorModel, Provenance};
use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub struct Instance {
    pub alphas: Vec<f64>,
    pub fm: FactorModel,
    pub costs: Vec<f64>,
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

/// Random positive-definite factor model with costs that kill a fraction of
/// the streams; about one stream in ten gets an exactly zero cost.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, f: usize) -> Instance {
    let alphas: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
    let xi2: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
    let loadings = DMatrix::from_fn(n, f, |_, _| 0.7 * normal(rng));
    let costs = alphas
        .iter()
        .map(|a| {
            if rng.random_bool(0.1) {
                0.0
            } else {
                rng.random_range(0.0..1.2) * a.abs()
            }
        })
        .collect();
    Instance {
        alphas,
        fm: FactorModel::new(xi2, loadings, Provenance::UserSupplied).unwrap(),
        costs,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}
