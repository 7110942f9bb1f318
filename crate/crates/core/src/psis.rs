//! Pareto-smoothed importance sampling.
//!
//! The largest importance ratios are replaced by expected order statistics
//! of a generalized Pareto distribution fitted to them. The fitted shape k̂
//! doubles as a reliability diagnostic: above 0.7 the importance sampling
//! estimate should not be trusted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::log_sum_exp;

/// Fewest draws [`psis_smooth`] accepts; the tail rule then yields 5 points.
pub const MIN_DRAWS: usize = 25;

/// Fewest exceedances [`fit_gpd`] accepts.
pub const MIN_TAIL: usize = 5;

/// Strength of the Zhang-Stephens grid prior.
const GRID_PRIOR: f64 = 3.0;
const MIN_GRID_POINTS: usize = 30;

/// Generalized Pareto fit with location 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdFit {
    /// Shape; positive values are heavy tailed.
    pub k: f64,
    /// Scale, always positive.
    pub sigma: f64,
    pub tail_size: usize,
}

impl GpdFit {
    /// Quantile function at probability `p` in `[0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        let log1m = (-p).ln_1p();
        if self.k.abs() < 1e-12 {
            -self.sigma * log1m
        } else {
            self.sigma * (-self.k * log1m).exp_m1() / self.k
        }
    }
}

/// Fit a generalized Pareto distribution to positive exceedances.
///
/// Uses the Zhang & Stephens (2009) profile-posterior estimator: the profile
/// log-likelihood in `θ = -k/σ` is evaluated on a fixed grid of
/// `30 + ⌊√n⌋` proposals, and the posterior-weighted mean of `θ` gives the
/// estimates. Zero exceedances are allowed as long as the sample is not
/// constant.
pub fn fit_gpd(tail_sample: &[f64]) -> Result<GpdFit> {
    let n = tail_sample.len();
    if n < MIN_TAIL {
        return Err(Error::InsufficientTail {
            got: n,
            need: MIN_TAIL,
        });
    }
    if let Some(bad) = tail_sample.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::InvalidTail(format!(
            "exceedances must be finite and non-negative, got {bad}"
        )));
    }
    let mut x = tail_sample.to_vec();
    x.sort_unstable_by(f64::total_cmp);
    let x_max = x[n - 1];
    if x_max == x[0] {
        return Err(Error::DegenerateTail);
    }

    // First quartile of the sample sets the grid spread.
    let q1 = x[((n as f64 / 4.0 + 0.5).floor() as usize).max(1) - 1];
    let x_star = if q1 > 0.0 {
        q1
    } else {
        *x.iter().find(|&&v| v > 0.0).expect("non-constant sample has a positive value")
    };

    let grid_len = MIN_GRID_POINTS + (n as f64).sqrt().floor() as usize;
    let thetas: Vec<f64> = (1..=grid_len)
        .map(|j| {
            1.0 / x_max
                + (1.0 - (grid_len as f64 / (j as f64 - 0.5)).sqrt()) / (GRID_PRIOR * x_star)
        })
        .collect();
    let log_lik: Vec<f64> = thetas
        .iter()
        .map(|&theta| n as f64 * profile_log_lik(theta, &x))
        .collect();
    let norm = log_sum_exp(&log_lik);
    let theta_hat: f64 = thetas
        .iter()
        .zip(&log_lik)
        .map(|(t, l)| t * (l - norm).exp())
        .sum();

    let k = x.iter().map(|&v| (-theta_hat * v).ln_1p()).sum::<f64>() / n as f64;
    let sigma = -k / theta_hat;
    if !(k.is_finite() && sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Numerical(format!(
            "Pareto fit produced k = {k}, sigma = {sigma}"
        )));
    }
    Ok(GpdFit {
        k,
        sigma,
        tail_size: n,
    })
}

/// Profile log-likelihood per observation at `θ`, maximized over the shape.
fn profile_log_lik(theta: f64, x: &[f64]) -> f64 {
    let b = -theta;
    let k = x.iter().map(|&v| (b * v).ln_1p()).sum::<f64>() / x.len() as f64;
    if k == 0.0 {
        // b -> 0 limit: b/k -> 1/mean(x)
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        return -mean.ln() - 1.0;
    }
    (b / k).ln() - k - 1.0
}

/// Reliability class of a shape estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KhatFlag {
    Ok,
    Warn,
    Bad,
}

/// `ok` for k̂ ≤ 0.5, `warn` up to 0.7, `bad` above (and for NaN).
pub fn khat_flag(k_hat: f64) -> KhatFlag {
    if k_hat <= 0.5 {
        KhatFlag::Ok
    } else if k_hat <= 0.7 {
        KhatFlag::Warn
    } else {
        KhatFlag::Bad
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsisResult {
    /// Smoothed log weights, normalized so that their log-sum-exp is 0.
    pub smoothed_log_weights: Vec<f64>,
    /// Fitted Pareto shape; 0 when the tail is degenerate.
    pub k_hat: f64,
    pub tail_size: usize,
    /// The tail had zero variance and the weights were left as they were.
    pub degenerate: bool,
}

impl PsisResult {
    pub fn flag(&self) -> KhatFlag {
        if self.degenerate {
            KhatFlag::Ok
        } else {
            khat_flag(self.k_hat)
        }
    }
}

/// Number of largest weights replaced by Pareto order statistics.
pub fn tail_len(n_draws: usize) -> usize {
    let s = n_draws as f64;
    (0.2 * s).min(3.0 * s.sqrt()).ceil() as usize
}

/// Pareto-smooth a vector of log importance weights.
///
/// The `M = ⌈min(0.2·S, 3·√S)⌉` largest weights are replaced by the GPD
/// quantiles at `(j - 0.5)/M` shifted by the largest weight outside the
/// tail, capped at the largest raw weight, and the result is normalized.
pub fn psis_smooth(log_weights: &[f64]) -> Result<PsisResult> {
    let s = log_weights.len();
    if s < MIN_DRAWS {
        return Err(Error::InsufficientDraws {
            got: s,
            need: MIN_DRAWS,
        });
    }
    if let Some(bad) = log_weights.iter().find(|v| !v.is_finite()) {
        return Err(Error::Input(format!("non-finite log weight {bad}")));
    }

    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut lw: Vec<f64> = log_weights.iter().map(|v| v - max).collect();
    let m = tail_len(s);

    // Partition so that the last `m` indices hold the tail, with the cutoff
    // (largest body value) just before them.
    let mut order: Vec<usize> = (0..s).collect();
    let cut_pos = s - m - 1;
    order.select_nth_unstable_by(cut_pos, |&a, &b| lw[a].total_cmp(&lw[b]));
    let cutoff = lw[order[cut_pos]];
    let tail_ids = &mut order[cut_pos + 1..];
    tail_ids.sort_unstable_by(|&a, &b| lw[a].total_cmp(&lw[b]));

    let exp_cutoff = cutoff.exp();
    let exceedances: Vec<f64> = tail_ids
        .iter()
        .map(|&i| (lw[i].exp() - exp_cutoff).max(0.0))
        .collect();

    let fit = match fit_gpd(&exceedances) {
        Ok(fit) => Some(fit),
        Err(Error::DegenerateTail) => None,
        Err(e) => return Err(e),
    };

    let (k_hat, degenerate) = match fit {
        Some(fit) => {
            for (j, &i) in tail_ids.iter().enumerate() {
                let p = (j as f64 + 0.5) / m as f64;
                lw[i] = (fit.quantile(p) + exp_cutoff).ln().min(0.0);
            }
            (fit.k, false)
        }
        None => (0.0, true),
    };

    let norm = log_sum_exp(&lw);
    lw.iter_mut().for_each(|v| *v -= norm);
    Ok(PsisResult {
        smoothed_log_weights: lw,
        k_hat,
        tail_size: m,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gpd_sample(k: f64, sigma: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                if k == 0.0 {
                    -sigma * (-u).ln_1p()
                } else {
                    sigma / k * ((1.0 - u).powf(-k) - 1.0)
                }
            })
            .collect()
    }

    #[test]
    fn tail_rule() {
        assert_eq!(tail_len(25), 5);
        assert_eq!(tail_len(100), 20);
        assert_eq!(tail_len(4000), 190);
        assert_eq!(tail_len(100_000), 949);
    }

    #[test]
    fn exponential_has_zero_shape() {
        let fit = fit_gpd(&gpd_sample(0.0, 1.0, 10_000, 11)).unwrap();
        assert!(fit.k.abs() <= 0.05, "k = {}", fit.k);
        assert!((fit.sigma - 1.0).abs() < 0.05, "sigma = {}", fit.sigma);
    }

    #[test]
    fn recovers_half_shape() {
        let fit = fit_gpd(&gpd_sample(0.5, 1.0, 10_000, 12)).unwrap();
        assert!((0.45..=0.55).contains(&fit.k), "k = {}", fit.k);
    }

    #[test]
    fn constant_sample_is_degenerate() {
        assert!(matches!(fit_gpd(&[1.0; 20]), Err(Error::DegenerateTail)));
    }

    #[test]
    fn short_tail_rejected() {
        assert!(matches!(
            fit_gpd(&[1.0, 2.0, 3.0, 4.0]),
            Err(Error::InsufficientTail { got: 4, .. })
        ));
        assert!(matches!(
            fit_gpd(&[1.0, 2.0, -3.0, 4.0, 5.0]),
            Err(Error::InvalidTail(_))
        ));
    }

    #[test]
    fn quantile_inverts_cdf() {
        let fit = GpdFit {
            k: 0.3,
            sigma: 2.0,
            tail_size: 5,
        };
        let x = fit.quantile(0.9);
        let cdf = 1.0 - (1.0 + fit.k * x / fit.sigma).powf(-1.0 / fit.k);
        assert!((cdf - 0.9).abs() < 1e-12);
        let exp = GpdFit { k: 0.0, ..fit };
        assert!((exp.quantile(0.5) - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn flags() {
        assert_eq!(khat_flag(0.69), KhatFlag::Warn);
        assert_eq!(khat_flag(0.71), KhatFlag::Bad);
        assert_eq!(khat_flag(0.0), KhatFlag::Ok);
        assert_eq!(khat_flag(0.5), KhatFlag::Ok);
        assert_eq!(khat_flag(0.7), KhatFlag::Warn);
        assert_eq!(khat_flag(f64::NAN), KhatFlag::Bad);
    }

    #[test]
    fn equal_weights_stay_uniform() {
        let res = psis_smooth(&[-3.0; 40]).unwrap();
        assert!(res.degenerate);
        assert_eq!(res.flag(), KhatFlag::Ok);
        let expected = -(40f64).ln();
        assert!(res
            .smoothed_log_weights
            .iter()
            .all(|w| (w - expected).abs() < 1e-14));
    }

    #[test]
    fn too_few_draws() {
        assert!(matches!(
            psis_smooth(&[0.0; 24]),
            Err(Error::InsufficientDraws { got: 24, need: 25 })
        ));
    }

    #[test]
    fn lognormal_ratios_are_light() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lw: Vec<f64> = (0..4000).map(|_| rng.sample(StandardNormal)).collect();
        let res = psis_smooth(&lw).unwrap();
        assert!(res.k_hat < 0.5, "k = {}", res.k_hat);
    }

    #[test]
    fn pareto_ratios_are_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // Pareto(alpha = 1) ratios: r = 1/U, so log r = -ln U
        let lw: Vec<f64> = (0..4000)
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        let res = psis_smooth(&lw).unwrap();
        assert!(res.k_hat > 0.7, "k = {}", res.k_hat);
        assert_eq!(res.flag(), KhatFlag::Bad);
    }

    #[test]
    fn top_weights_tied_is_degenerate() {
        let mut lw = vec![0.0; 30];
        for v in lw.iter_mut().take(10) {
            *v = 2.0;
        }
        let res = psis_smooth(&lw).unwrap();
        assert!(res.degenerate);
    }
}
