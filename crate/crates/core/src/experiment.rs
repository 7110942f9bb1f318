//! Replicate experiments: standard error of the subsampled estimate as a
//! function of `n`, for PPS and simple random sampling.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::draws::DrawsBundle;
use crate::error::{Error, Result};
use crate::estimators::ElpdReport;
use crate::gaussian::{fit, make_bundle, simulate_lr, Design, PosteriorKind};
use crate::loo::LooCache;
use crate::sampling::{draw_subsample, SamplingPlan, Strategy};

/// Deterministic seed derivation (SplitMix64 over the parts).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

/// Reports for `replicates` independent subsamples of size `m`. LOO
/// estimates are shared across replicates, so each observation is smoothed
/// at most once.
pub fn replicate_reports(
    bundle: &DrawsBundle,
    plan: &SamplingPlan,
    m: usize,
    replicates: usize,
    seed: u64,
) -> Result<Vec<ElpdReport>> {
    let table = plan.alias_table();
    let mut cache = LooCache::new(bundle);
    (0..replicates)
        .map(|r| {
            let sub = draw_subsample(&table, m, derive_seed(seed, &[r as u64]))?;
            let points = cache.get_all(&sub.indices)?;
            ElpdReport::from_subsample(&points, plan, &sub)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeExperimentConfig {
    pub ns: Vec<usize>,
    pub m: usize,
    pub replicates: usize,
    pub n_draws: usize,
    pub dim: usize,
    pub design: Design,
    pub approx: PosteriorKind,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeRow {
    pub method: String,
    pub n: usize,
    pub m: usize,
    pub replicates: usize,
    /// Mean over replicates of the total-scale subsampling SE.
    pub mean_se: f64,
    /// Mean over replicates of σ̂_loo, skipping negative variance estimates.
    pub mean_sigma_loo: f64,
}

fn summarize(method: &str, n: usize, m: usize, reports: &[ElpdReport]) -> SeRow {
    let mean_se = reports.iter().map(|r| r.se_subsampling).sum::<f64>() / reports.len() as f64;
    let sigmas: Vec<f64> = reports
        .iter()
        .map(|r| r.sigma_loo_hat)
        .filter(|s| s.is_finite())
        .collect();
    let mean_sigma_loo = if sigmas.is_empty() {
        f64::NAN
    } else {
        sigmas.iter().sum::<f64>() / sigmas.len() as f64
    };
    SeRow {
        method: method.to_string(),
        n,
        m,
        replicates: reports.len(),
        mean_se,
        mean_sigma_loo,
    }
}

/// For every `n`: simulate a dataset, fit, draw, then estimate elpd from
/// `replicates` subsamples under PPS (point lpd at the approximation's
/// mean) and under simple random sampling.
pub fn run_se_experiment(cfg: &SeExperimentConfig) -> Result<Vec<SeRow>> {
    if cfg.replicates == 0 {
        return Err(Error::Config("need at least one replicate".into()));
    }
    if cfg.m < 2 {
        return Err(Error::Config("need m >= 2 for a standard error".into()));
    }
    if cfg.replicates == 1 {
        log::warn!("a single replicate gives no spread of the SE estimate");
    }
    let mut rows = Vec::new();
    for &n in &cfg.ns {
        let n_seed = derive_seed(cfg.seed, &[n as u64]);
        let model = simulate_lr(n, cfg.dim, cfg.design, derive_seed(n_seed, &[0]))?;
        let post = fit(&model, cfg.approx)?;
        let bundle = make_bundle(&model, &post, cfg.n_draws, derive_seed(n_seed, &[1]))?;

        let pps = SamplingPlan::compute(
            Strategy::LpdAtQMean,
            Some(&bundle),
            Some(&model.point_lpd(&post.mean)),
        )?;
        let srs = SamplingPlan::uniform(n);
        let pps_reports =
            replicate_reports(&bundle, &pps, cfg.m, cfg.replicates, derive_seed(n_seed, &[2]))?;
        let srs_reports =
            replicate_reports(&bundle, &srs, cfg.m, cfg.replicates, derive_seed(n_seed, &[3]))?;
        rows.push(summarize("pps", n, cfg.m, &pps_reports));
        rows.push(summarize("srs", n, cfg.m, &srs_reports));
    }
    Ok(rows)
}

pub const SE_CSV_HEADER: &str = "method,n,m,replicates,mean_se,mean_sigma_loo";

pub fn write_se_csv(rows: &[SeRow], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{SE_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:?},{:?}",
            r.method, r.n, r.m, r.replicates, r.mean_se, r.mean_sigma_loo
        )?;
    }
    Ok(())
}
