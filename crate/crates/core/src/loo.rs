//! PSIS-LOO predictive densities with a correction for draws that come from
//! an approximation `q` of the posterior rather than the posterior itself.
//!
//! For observation `i` the importance ratio of draw `s` is
//!
//! ```text
//! r_s ∝ p(θ_s | y) / (p(y_i | θ_s) q(θ_s | y))
//! ```
//!
//! which reduces to the inverse likelihood when `q` is the exact posterior.
//! The ratios are smoothed as a single product, so every observation gets a
//! single k̂.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::draws::{DrawsBundle, ObservationId};
use crate::error::{Error, Result};
use crate::math::log_sum_exp_paired;
use crate::psis::{psis_smooth, KhatFlag, PsisResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LooPointEstimate {
    pub obs: ObservationId,
    /// `log p̂(y_i | y_-i)` in nats.
    pub loo_lpd: f64,
    pub k_hat: f64,
    pub flag: KhatFlag,
}

/// `log r_s = -log p(y_i|θ_s) + log p(θ_s|y) - log q(θ_s|y)`, up to a
/// constant.
pub fn correction_log_ratios(bundle: &DrawsBundle, i: ObservationId) -> Vec<f64> {
    bundle
        .column(i)
        .iter()
        .zip(bundle.log_p().iter().zip(bundle.log_q()))
        .map(|(ll, (p, q))| -ll + p - q)
        .collect()
}

/// Smoothed-importance-sampling estimate of `log p(y_i | y_-i)`.
pub fn loo_lpd(bundle: &DrawsBundle, i: ObservationId) -> Result<LooPointEstimate> {
    bundle.obs(i.index())?;
    let psis = psis_smooth(&correction_log_ratios(bundle, i))?;
    Ok(LooPointEstimate {
        obs: i,
        loo_lpd: log_sum_exp_paired(&psis.smoothed_log_weights, bundle.column(i)),
        k_hat: psis.k_hat,
        flag: psis.flag(),
    })
}

/// [`loo_lpd`] for every observation. Observations are processed in
/// parallel; the result does not depend on scheduling.
pub fn loo_all(bundle: &DrawsBundle) -> Result<Vec<LooPointEstimate>> {
    (0..bundle.n_obs())
        .into_par_iter()
        .map(|i| {
            loo_lpd(bundle, ObservationId(i)).map_err(|e| Error::AtObservation {
                index: i,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Smoothing diagnostic for the approximation as a whole: the ratios
/// `log_p - log_q` smoothed on their own. Reported, never used to gate.
pub fn posterior_khat(bundle: &DrawsBundle) -> Result<PsisResult> {
    psis_smooth(&bundle.log_posterior_ratios())
}

/// Memoizing [`loo_lpd`] evaluator. Counts how many observations were
/// actually smoothed, which is what the subsampled path promises to bound.
#[derive(Debug)]
pub struct LooCache<'a> {
    bundle: &'a DrawsBundle,
    cache: HashMap<ObservationId, LooPointEstimate>,
}

impl<'a> LooCache<'a> {
    pub fn new(bundle: &'a DrawsBundle) -> Self {
        LooCache {
            bundle,
            cache: HashMap::new(),
        }
    }

    pub fn get(&mut self, i: ObservationId) -> Result<LooPointEstimate> {
        if let Some(est) = self.cache.get(&i) {
            return Ok(*est);
        }
        let est = loo_lpd(self.bundle, i).map_err(|e| Error::AtObservation {
            index: i.index(),
            source: Box::new(e),
        })?;
        self.cache.insert(i, est);
        Ok(est)
    }

    /// Estimates aligned with `indices` (duplicates repeat the cached value).
    pub fn get_all(&mut self, indices: &[ObservationId]) -> Result<Vec<LooPointEstimate>> {
        indices.iter().map(|&i| self.get(i)).collect()
    }

    /// Number of distinct observations smoothed so far.
    pub fn evaluations(&self) -> usize {
        self.cache.len()
    }

    pub fn bundle(&self) -> &'a DrawsBundle {
        self.bundle
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle_with_column(col: &[f64], log_p: Vec<f64>, log_q: Vec<f64>) -> DrawsBundle {
        DrawsBundle::from_columns(col.to_vec(), 1, log_p, log_q).unwrap()
    }

    #[test]
    fn exact_posterior_gives_inverse_likelihood() {
        let col = [-1.0, -2.0, -0.5];
        let b = bundle_with_column(&col, vec![0.3, 1.0, -2.0], vec![0.3, 1.0, -2.0]);
        let r = correction_log_ratios(&b, ObservationId(0));
        assert_eq!(r, vec![1.0, 2.0, 0.5]);
    }

    #[test]
    fn constant_column_gives_constant_ratios() {
        let b = bundle_with_column(&[-0.4; 5], vec![0.0; 5], vec![0.0; 5]);
        assert!(correction_log_ratios(&b, ObservationId(0))
            .iter()
            .all(|&r| r == 0.4));
    }

    #[test]
    fn correction_term_enters_ratio() {
        let b = bundle_with_column(&[-1.0, -1.0], vec![2.0, 0.0], vec![0.5, 0.0]);
        assert_eq!(correction_log_ratios(&b, ObservationId(0)), vec![2.5, 1.0]);
    }

    #[test]
    fn constant_column_loo_is_the_constant() {
        let c = -1.3;
        let b = bundle_with_column(&[c; 50], vec![0.0; 50], vec![0.0; 50]);
        let est = loo_lpd(&b, ObservationId(0)).unwrap();
        assert!((est.loo_lpd - c).abs() < 1e-13);
        assert_eq!(est.flag, KhatFlag::Ok);
    }

    #[test]
    fn too_few_draws_propagates_with_index() {
        let b = DrawsBundle::from_columns(vec![-1.0; 20], 2, vec![0.0; 10], vec![0.0; 10])
            .unwrap();
        match loo_all(&b).unwrap_err() {
            Error::AtObservation { index, source } => {
                assert_eq!(index, 0);
                assert!(matches!(*source, Error::InsufficientDraws { .. }));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn out_of_range_observation() {
        let b = bundle_with_column(&[-1.0; 30], vec![0.0; 30], vec![0.0; 30]);
        assert!(matches!(
            loo_lpd(&b, ObservationId(1)),
            Err(Error::ObservationOutOfRange { index: 1, n_obs: 1 })
        ));
    }
}
