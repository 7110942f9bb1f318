//! Hansen-Hurwitz estimation of elpd from a with-replacement PPS subsample.
//!
//! All estimators here work on the mean scale (elpd divided by `n`); the
//! reports carry both the mean and the total. For a subsample `a_1..a_m`
//! with values `v_j = log p̂(y_{a_j} | y_-a_j)` and ratios
//! `r_j = v_j / π̃_{a_j}`:
//!
//! ```text
//! mean elpd   = r̄ / n
//! variance    = Σ (r_j - r̄)² / (n² m (m-1))
//! σ²_loo      = Σ v_j² / π̃_{a_j} / (n m) + variance - (r̄ / n)²
//! ```
//!
//! Each of these is unbiased over the sampling design; in particular the
//! σ²_loo estimate can come out negative and is returned as is.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::draws::DrawsBundle;
use crate::error::{Error, Result};
use crate::loo::{LooCache, LooPointEstimate};
use crate::psis::KhatFlag;
use crate::sampling::{SamplingPlan, Subsample};

/// Values observed at the subsampled indices together with their selection
/// probabilities.
#[derive(Debug, Clone)]
pub struct HhSample {
    values: Vec<f64>,
    ratios: Vec<f64>,
    n: usize,
}

impl HhSample {
    /// `values[j]` was drawn with probability `probs[j]` from a population
    /// of size `n`.
    pub fn new(values: &[f64], probs: &[f64], n: usize) -> Result<Self> {
        if values.len() != probs.len() {
            return Err(Error::Input(format!(
                "{} values for {} probabilities",
                values.len(),
                probs.len()
            )));
        }
        if values.is_empty() {
            return Err(Error::Input("empty subsample".into()));
        }
        if n == 0 {
            return Err(Error::Input("population size must be positive".into()));
        }
        Ok(HhSample {
            values: values.to_vec(),
            ratios: values.iter().zip(probs).map(|(v, p)| v / p).collect(),
            n,
        })
    }

    /// Align `values` with the plan probabilities of `subsample.indices`.
    pub fn from_plan(values: &[f64], plan: &SamplingPlan, subsample: &Subsample) -> Result<Self> {
        if values.len() != subsample.indices.len() {
            return Err(Error::Input(format!(
                "{} values for a subsample of {} indices",
                values.len(),
                subsample.indices.len()
            )));
        }
        let probs = subsample
            .indices
            .iter()
            .map(|i| {
                plan.pi_tilde.get(i.index()).copied().ok_or(Error::ObservationOutOfRange {
                    index: i.index(),
                    n_obs: plan.n(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(values, &probs, plan.n())
    }

    pub fn m(&self) -> usize {
        self.ratios.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn mean_ratio(&self) -> f64 {
        self.ratios.iter().sum::<f64>() / self.m() as f64
    }

    fn check_dof(&self) -> Result<()> {
        if self.m() < 2 {
            return Err(Error::DegreesOfFreedom {
                got: self.m(),
                need: 2,
            });
        }
        Ok(())
    }

    /// Mean-scale elpd estimate.
    pub fn elpd_mean(&self) -> f64 {
        self.mean_ratio() / self.n as f64
    }

    /// Variance of [`HhSample::elpd_mean`] over the sampling design.
    pub fn variance(&self) -> Result<f64> {
        self.check_dof()?;
        let rbar = self.mean_ratio();
        let m = self.m() as f64;
        let n = self.n as f64;
        let ss: f64 = self.ratios.iter().map(|r| (r - rbar).powi(2)).sum();
        Ok(ss / (n * n * m * (m - 1.0)))
    }

    /// Unbiased estimate of the finite-population variance of the values.
    pub fn sigma_loo_sq(&self) -> Result<SigmaLooEstimate> {
        let var = self.variance()?;
        let m = self.m() as f64;
        let n = self.n as f64;
        // Σ v²/π = Σ v·r
        let second_moment: f64 = self
            .values
            .iter()
            .zip(&self.ratios)
            .map(|(v, r)| v * r)
            .sum::<f64>()
            / (n * m);
        let value = second_moment + var - self.elpd_mean().powi(2);
        Ok(SigmaLooEstimate {
            value,
            negative: value < 0.0,
        })
    }
}

/// Estimate of σ²_loo; `negative` marks finite-sample estimates below zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaLooEstimate {
    pub value: f64,
    pub negative: bool,
}

impl SigmaLooEstimate {
    /// Standard deviation, NaN when the variance estimate is negative.
    pub fn sd(&self) -> f64 {
        if self.negative {
            f64::NAN
        } else {
            self.value.sqrt()
        }
    }
}

/// Hansen-Hurwitz estimate of the mean elpd; multiply by `n` for the total.
pub fn hh_elpd(values: &[f64], plan: &SamplingPlan, subsample: &Subsample) -> Result<f64> {
    Ok(HhSample::from_plan(values, plan, subsample)?.elpd_mean())
}

/// Variance of [`hh_elpd`]; requires `m >= 2`.
pub fn hh_variance(values: &[f64], plan: &SamplingPlan, subsample: &Subsample) -> Result<f64> {
    HhSample::from_plan(values, plan, subsample)?.variance()
}

pub fn sigma_loo_sq(
    values: &[f64],
    plan: &SamplingPlan,
    subsample: &Subsample,
) -> Result<SigmaLooEstimate> {
    HhSample::from_plan(values, plan, subsample)?.sigma_loo_sq()
}

/// Simple random sampling with replacement: the Hansen-Hurwitz estimator
/// with `π̃_i = 1/n`. Returns `(mean elpd, variance)`.
pub fn srs_elpd(values: &[f64], n: usize) -> Result<(f64, f64)> {
    let probs = vec![1.0 / n as f64; values.len()];
    let sample = HhSample::new(values, &probs, n)?;
    let var = sample.variance()?;
    Ok((sample.elpd_mean(), var))
}

fn nan_as_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_nan() {
        s.serialize_none()
    } else {
        s.serialize_f64(*v)
    }
}

fn null_as_nan<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// Subsampled elpd estimate with its uncertainty and diagnostics.
///
/// `elpd_hat`, `se_subsampling` and `sigma_loo_hat` are on the total scale
/// (nats summed over all `n` observations for the first two; per
/// observation for σ); the `*_mean_*` fields repeat the first two on the
/// mean scale. `sigma_loo_hat` is NaN (`null` in JSON) when the σ²_loo
/// estimate is negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElpdReport {
    pub elpd_hat: f64,
    pub se_subsampling: f64,
    #[serde(serialize_with = "nan_as_null", deserialize_with = "null_as_nan")]
    pub sigma_loo_hat: f64,
    pub m: usize,
    pub n: usize,
    /// Share of distinct subsampled observations with k̂ > 0.7.
    pub khat_bad_fraction: f64,
    pub elpd_mean_hat: f64,
    pub se_mean_subsampling: f64,
    pub sigma_loo_sq_hat: f64,
    pub sigma_loo_negative: bool,
}

impl ElpdReport {
    /// Report from LOO estimates aligned with `subsample.indices`.
    pub fn from_subsample(
        points: &[LooPointEstimate],
        plan: &SamplingPlan,
        subsample: &Subsample,
    ) -> Result<Self> {
        let values: Vec<f64> = points.iter().map(|p| p.loo_lpd).collect();
        let sample = HhSample::from_plan(&values, plan, subsample)?;
        let n = plan.n();
        let mean = sample.elpd_mean();
        let var = sample.variance()?;
        let sigma = sample.sigma_loo_sq()?;

        let mut distinct: Vec<&LooPointEstimate> = points.iter().collect();
        distinct.sort_unstable_by_key(|p| p.obs);
        distinct.dedup_by_key(|p| p.obs);
        let bad = distinct.iter().filter(|p| p.flag == KhatFlag::Bad).count();

        Ok(ElpdReport {
            elpd_hat: mean * n as f64,
            se_subsampling: var.sqrt() * n as f64,
            sigma_loo_hat: sigma.sd(),
            m: sample.m(),
            n,
            khat_bad_fraction: bad as f64 / distinct.len() as f64,
            elpd_mean_hat: mean,
            se_mean_subsampling: var.sqrt(),
            sigma_loo_sq_hat: sigma.value,
            sigma_loo_negative: sigma.negative,
        })
    }

    /// Report for the full (non-subsampled) computation: exact sum, zero
    /// subsampling error and the population SD of the pointwise values.
    pub fn from_full(points: &[LooPointEstimate]) -> Self {
        let n = points.len();
        let values: Vec<f64> = points.iter().map(|p| p.loo_lpd).collect();
        let mean = crate::math::mean(&values);
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let bad = points.iter().filter(|p| p.flag == KhatFlag::Bad).count();
        ElpdReport {
            elpd_hat: values.iter().sum(),
            se_subsampling: 0.0,
            sigma_loo_hat: var.sqrt(),
            m: n,
            n,
            khat_bad_fraction: bad as f64 / n as f64,
            elpd_mean_hat: mean,
            se_mean_subsampling: 0.0,
            sigma_loo_sq_hat: var,
            sigma_loo_negative: false,
        }
    }
}

/// Paired comparison of two models on one subsample, model A minus model B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub elpd_diff: f64,
    pub se_diff: f64,
    pub shared_subsample: Subsample,
    pub elpd_a: f64,
    pub se_a: f64,
    pub elpd_b: f64,
    pub se_b: f64,
}

/// Compare two models fitted to the same `n` observations on a shared
/// subsample. The pointwise differences are estimated with the same plan,
/// so noise common to both models cancels.
pub fn compare_models(
    bundle_a: &DrawsBundle,
    bundle_b: &DrawsBundle,
    plan: &SamplingPlan,
    subsample: &Subsample,
) -> Result<ComparisonReport> {
    if bundle_a.n_obs() != bundle_b.n_obs() {
        return Err(Error::Input(format!(
            "models disagree on n: {} vs {}",
            bundle_a.n_obs(),
            bundle_b.n_obs()
        )));
    }
    if plan.n() != bundle_a.n_obs() {
        return Err(Error::Input(format!(
            "plan covers {} observations, models have {}",
            plan.n(),
            bundle_a.n_obs()
        )));
    }
    let values = |bundle| -> Result<Vec<f64>> {
        let mut cache = LooCache::new(bundle);
        Ok(cache
            .get_all(&subsample.indices)?
            .into_iter()
            .map(|p| p.loo_lpd)
            .collect())
    };
    let va = values(bundle_a)?;
    let vb = values(bundle_b)?;
    let diff: Vec<f64> = va.iter().zip(&vb).map(|(a, b)| a - b).collect();

    let n = plan.n() as f64;
    let a = HhSample::from_plan(&va, plan, subsample)?;
    let b = HhSample::from_plan(&vb, plan, subsample)?;
    let d = HhSample::from_plan(&diff, plan, subsample)?;
    Ok(ComparisonReport {
        elpd_diff: d.elpd_mean() * n,
        se_diff: d.variance()?.sqrt() * n,
        shared_subsample: subsample.clone(),
        elpd_a: a.elpd_mean() * n,
        se_a: a.variance()?.sqrt() * n,
        elpd_b: b.elpd_mean() * n,
        se_b: b.variance()?.sqrt() * n,
    })
}
