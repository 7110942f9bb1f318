#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ppsloo_core::gaussian::simulate_lr;
use ppsloo_core::{ConjugateLinearModel, Design};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Normal-mean model: intercept only, unit noise, N(0, 10²) prior.
pub fn normal_mean_model(n: usize, seed: u64) -> ConjugateLinearModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu = 0.7;
    let y: Vec<f64> = (0..n).map(|_| mu + rng.sample::<f64, _>(StandardNormal)).collect();
    ConjugateLinearModel::new(
        DMatrix::from_element(n, 1, 1.0),
        DVector::from_vec(y),
        1.0,
        DVector::zeros(1),
        DMatrix::from_element(1, 1, 100.0),
    )
    .unwrap()
}

pub fn regression(n: usize, d: usize, design: Design, seed: u64) -> ConjugateLinearModel {
    simulate_lr(n, d, design, seed).unwrap()
}

/// Exact enumeration over all `n^m` ordered index tuples.
pub fn for_each_tuple(n: usize, m: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; m];
    loop {
        f(&idx);
        let mut k = 0;
        loop {
            if k == m {
                return;
            }
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}
