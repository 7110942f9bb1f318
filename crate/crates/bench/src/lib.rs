//! Shared fixtures for the benchmarks in `benches/`.

use ppsloo_core::gaussian::{fit_exact, make_bundle, simulate_lr};
use ppsloo_core::{ConjugateLinearModel, Design, DrawsBundle, SamplingPlan, Strategy};

/// Simulated regression with exact-posterior draws.
pub fn regression_bundle(n: usize, d: usize, s: usize, seed: u64) -> (ConjugateLinearModel, DrawsBundle) {
    let model = simulate_lr(n, d, Design::Independent, seed).expect("valid simulation size");
    let post = fit_exact(&model).expect("conjugate fit");
    let bundle = make_bundle(&model, &post, s, seed.wrapping_add(1)).expect("draws");
    (model, bundle)
}

/// PPS plan from the point lpd at the posterior mean.
pub fn point_plan(model: &ConjugateLinearModel, bundle: &DrawsBundle) -> SamplingPlan {
    let post = fit_exact(model).expect("conjugate fit");
    SamplingPlan::compute(Strategy::LpdAtQMean, Some(bundle), Some(&model.point_lpd(&post.mean)))
        .expect("positive sizes")
}
