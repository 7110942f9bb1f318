//! Leave-one-out cross-validation for large datasets.
//!
//! The pipeline estimates the expected log pointwise predictive density
//! (elpd) of a Bayesian model without touching every observation:
//!
//! 1. draws from the (possibly approximate) posterior arrive as a
//!    [`DrawsBundle`] holding the per-draw log-likelihood matrix and the
//!    log densities of the target posterior and of the proposal;
//! 2. [`psis`] stabilizes importance ratios with a generalized Pareto fit
//!    and reports the shape diagnostic k̂;
//! 3. [`loo`] turns the corrected ratios into per-observation LOO
//!    predictive densities;
//! 4. [`sampling`] builds probability-proportional-to-size plans and an
//!    alias table for O(1) draws;
//! 5. [`estimators`] combines a subsample into a Hansen-Hurwitz estimate
//!    with its subsampling variance and an estimate of σ²_loo.
//!
//! [`gaussian`] provides a conjugate linear-regression family with closed
//! form LOO predictive densities, used as the correctness oracle.

pub mod draws;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod gaussian;
pub mod loo;
pub mod math;
pub mod pipeline;
pub mod psis;
pub mod sampling;

pub use draws::{full_data_lpd, DrawsBundle, DrawsFormat, ObservationId};
pub use error::{Error, Result};
pub use estimators::{
    compare_models, hh_elpd, hh_variance, sigma_loo_sq, srs_elpd, ComparisonReport, ElpdReport,
    SigmaLooEstimate,
};
pub use gaussian::{
    ConjugateLinearModel, Design, GaussianPosterior, PosteriorKind,
};
pub use loo::{correction_log_ratios, loo_all, loo_lpd, LooPointEstimate};
pub use psis::{fit_gpd, psis_smooth, GpdFit, KhatFlag, PsisResult};
pub use sampling::{AliasTable, SamplingPlan, Strategy, Subsample};
