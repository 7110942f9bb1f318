//! End-to-end estimation: plan, subsample, smooth only what was sampled,
//! and combine.

use serde::{Deserialize, Serialize};

use crate::draws::DrawsBundle;
use crate::error::{Error, Result};
use crate::estimators::ElpdReport;
use crate::loo::{loo_all, posterior_khat, LooCache, LooPointEstimate};
use crate::sampling::{draw_subsample, AliasTable, SamplingPlan, Subsample};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsampledEstimate {
    pub report: ElpdReport,
    pub subsample: Subsample,
    /// LOO estimates aligned with `subsample.indices`.
    pub points: Vec<LooPointEstimate>,
    /// Distinct observations whose ratios were smoothed.
    pub psis_evaluations: usize,
}

/// Subsampled estimate: `O(m)` smoothing calls on top of the plan.
pub fn estimate_subsampled(
    bundle: &DrawsBundle,
    plan: &SamplingPlan,
    m: usize,
    seed: u64,
) -> Result<SubsampledEstimate> {
    if plan.n() != bundle.n_obs() {
        return Err(Error::Input(format!(
            "plan covers {} observations, draws have {}",
            plan.n(),
            bundle.n_obs()
        )));
    }
    estimate_with_table(bundle, plan, &plan.alias_table(), m, seed)
}

/// [`estimate_subsampled`] with a prebuilt alias table for `plan`, leaving
/// only the `O(mS)` part.
pub fn estimate_with_table(
    bundle: &DrawsBundle,
    plan: &SamplingPlan,
    table: &AliasTable,
    m: usize,
    seed: u64,
) -> Result<SubsampledEstimate> {
    if table.len() != bundle.n_obs() {
        return Err(Error::Input(format!(
            "alias table covers {} observations, draws have {}",
            table.len(),
            bundle.n_obs()
        )));
    }
    let subsample = draw_subsample(table, m, seed)?;
    let mut cache = LooCache::new(bundle);
    let points = cache.get_all(&subsample.indices)?;
    let report = ElpdReport::from_subsample(&points, plan, &subsample)?;
    Ok(SubsampledEstimate {
        report,
        subsample,
        points,
        psis_evaluations: cache.evaluations(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FullEstimate {
    pub report: ElpdReport,
    pub points: Vec<LooPointEstimate>,
}

/// Reference path: smooth every observation.
pub fn estimate_full(bundle: &DrawsBundle) -> Result<FullEstimate> {
    let points = loo_all(bundle)?;
    Ok(FullEstimate {
        report: ElpdReport::from_full(&points),
        points,
    })
}

/// k̂ of `log_p - log_q` alone, or `None` when there are too few draws.
pub fn approximation_khat(bundle: &DrawsBundle) -> Option<f64> {
    posterior_khat(bundle).ok().map(|r| r.k_hat)
}
