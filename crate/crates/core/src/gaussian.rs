//! Conjugate Gaussian linear regression with known noise variance.
//!
//! `y ~ N(Xβ, σ_y² I)` with prior `β ~ N(μ₀, Σ₀)` has a Gaussian posterior
//! with precision `Λ = Σ₀⁻¹ + XᵀX/σ_y²` and mean `Λ⁻¹(Σ₀⁻¹μ₀ + Xᵀy/σ_y²)`.
//! Leaving out observation `i` subtracts its rank-one contribution, so both
//! `p(y_i | y)` and `p(y_i | y_-i)` are available in closed form. That makes
//! this family the reference against which the sampling-based estimates are
//! checked.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::draws::DrawsBundle;
use crate::error::{Error, Result};
use crate::math::{normal_log_pdf, LN_2PI};

/// Equicorrelation of the predictors in the correlated design.
pub const CORRELATED_RHO: f64 = 0.9;
/// Prior standard deviation of the coefficients in simulated models.
pub const DEFAULT_PRIOR_SD: f64 = 10.0;
pub const DEFAULT_NOISE_SD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// Equicorrelated predictors with correlation [`CORRELATED_RHO`].
    Correlated,
    /// i.i.d. standard normal predictors.
    Independent,
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "correlated" => Ok(Design::Correlated),
            "independent" => Ok(Design::Independent),
            other => Err(Error::Config(format!("unknown design `{other}`"))),
        }
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Design::Correlated => "correlated",
            Design::Independent => "independent",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorKind {
    Exact,
    Laplace,
    MeanField,
}

impl FromStr for PosteriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(PosteriorKind::Exact),
            "laplace" => Ok(PosteriorKind::Laplace),
            "mean_field" => Ok(PosteriorKind::MeanField),
            other => Err(Error::Config(format!("unknown approximation `{other}`"))),
        }
    }
}

impl fmt::Display for PosteriorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PosteriorKind::Exact => "exact",
            PosteriorKind::Laplace => "laplace",
            PosteriorKind::MeanField => "mean_field",
        })
    }
}

/// Bayesian linear regression with a Gaussian prior and known noise SD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct ConjugateLinearModel {
    x: DMatrix<f64>,
    y: DVector<f64>,
    noise_sd: f64,
    prior_mean: DVector<f64>,
    prior_cov: DMatrix<f64>,
}

/// JSON layout of a model: `x` as a list of rows.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    noise_sd: f64,
    prior_mean: Vec<f64>,
    prior_cov: Vec<Vec<f64>>,
}

fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if let Some(r) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::Input(format!(
            "{what}: row of length {} where {ncols} expected",
            r.len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl TryFrom<ModelFile> for ConjugateLinearModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let d = f.prior_mean.len();
        let x = matrix_from_rows(&f.x, d, "x")?;
        let prior_cov = matrix_from_rows(&f.prior_cov, d, "prior_cov")?;
        ConjugateLinearModel::new(
            x,
            DVector::from_vec(f.y),
            f.noise_sd,
            DVector::from_vec(f.prior_mean),
            prior_cov,
        )
    }
}

impl From<ConjugateLinearModel> for ModelFile {
    fn from(m: ConjugateLinearModel) -> Self {
        ModelFile {
            x: matrix_rows(&m.x),
            y: m.y.iter().copied().collect(),
            noise_sd: m.noise_sd,
            prior_mean: m.prior_mean.iter().copied().collect(),
            prior_cov: matrix_rows(&m.prior_cov),
        }
    }
}

fn cholesky(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| Error::Numerical(format!("{what} is not positive definite")))
}

impl ConjugateLinearModel {
    pub fn new(
        x: DMatrix<f64>,
        y: DVector<f64>,
        noise_sd: f64,
        prior_mean: DVector<f64>,
        prior_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let d = prior_mean.len();
        if d == 0 {
            return Err(Error::Input("model needs at least one coefficient".into()));
        }
        if x.ncols() != d {
            return Err(Error::Input(format!("x has {} columns, prior has {d}", x.ncols())));
        }
        if x.nrows() != y.len() {
            return Err(Error::Input(format!(
                "x has {} rows, y has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::Input("model needs at least one observation".into()));
        }
        if prior_cov.shape() != (d, d) {
            return Err(Error::Input(format!(
                "prior_cov is {:?}, expected ({d}, {d})",
                prior_cov.shape()
            )));
        }
        if !(noise_sd.is_finite() && noise_sd > 0.0) {
            return Err(Error::Input(format!("noise_sd must be positive, got {noise_sd}")));
        }
        if x.iter().chain(y.iter()).chain(prior_mean.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Input("model contains non-finite values".into()));
        }
        let asym = (&prior_cov - prior_cov.transpose()).abs().max();
        if !(asym <= 1e-12 * prior_cov.abs().max()) {
            return Err(Error::Input("prior_cov is not symmetric".into()));
        }
        cholesky(prior_cov.clone(), "prior_cov")?;
        Ok(ConjugateLinearModel {
            x,
            y,
            noise_sd,
            prior_mean,
            prior_cov,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    pub fn prior_mean(&self) -> &DVector<f64> {
        &self.prior_mean
    }

    pub fn prior_cov(&self) -> &DMatrix<f64> {
        &self.prior_cov
    }

    /// Same data under a different prior.
    pub fn with_prior(&self, prior_mean: DVector<f64>, prior_cov: DMatrix<f64>) -> Result<Self> {
        Self::new(self.x.clone(), self.y.clone(), self.noise_sd, prior_mean, prior_cov)
    }

    fn noise_var(&self) -> f64 {
        self.noise_sd * self.noise_sd
    }

    fn prior_precision(&self) -> Result<DMatrix<f64>> {
        Ok(cholesky(self.prior_cov.clone(), "prior_cov")?.inverse())
    }

    /// Posterior precision `Λ` and linear term `b` with mean `Λ⁻¹ b`.
    fn natural_parameters(&self) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let p0 = self.prior_precision()?;
        let s2 = self.noise_var();
        let xt = self.x.transpose();
        let lambda = &p0 + (&xt * &self.x) / s2;
        let b = &p0 * &self.prior_mean + (&xt * &self.y) / s2;
        Ok((lambda, b))
    }

    fn row(&self, i: usize) -> DVector<f64> {
        self.x.row(i).transpose()
    }

    /// `log p(y_i | θ)` for every observation.
    pub fn point_lpd(&self, theta: &DVector<f64>) -> Vec<f64> {
        let mu = &self.x * theta;
        let s2 = self.noise_var();
        self.y
            .iter()
            .zip(mu.iter())
            .map(|(&y, &m)| normal_log_pdf(y, m, s2))
            .collect()
    }

    /// Unnormalized log posterior: log prior plus log likelihood.
    pub fn log_posterior_unnormalized(&self, theta: &DVector<f64>) -> Result<f64> {
        let prior = GaussianPosterior::new(
            self.prior_mean.clone(),
            self.prior_cov.clone(),
            PosteriorKind::Exact,
        )?;
        Ok(prior.log_density(theta) + self.point_lpd(theta).iter().sum::<f64>())
    }

    /// Closed-form `log p(y_i | y)`.
    pub fn exact_full_lpd(&self, i: usize) -> Result<f64> {
        let post = fit_exact(self)?;
        Ok(self.predictive_lpd(i, &post.mean, &post.cov))
    }

    /// Closed-form `log p(y_i | y_-i)`.
    pub fn exact_loo_lpd(&self, i: usize) -> Result<f64> {
        let (lambda, b) = self.natural_parameters()?;
        self.loo_from_natural(i, &lambda, &b)
    }

    /// [`ConjugateLinearModel::exact_loo_lpd`] for every observation.
    pub fn exact_loo_all(&self) -> Result<Vec<f64>> {
        let (lambda, b) = self.natural_parameters()?;
        (0..self.n_obs())
            .map(|i| self.loo_from_natural(i, &lambda, &b))
            .collect()
    }

    /// [`ConjugateLinearModel::exact_full_lpd`] for every observation.
    pub fn exact_full_all(&self) -> Result<Vec<f64>> {
        let post = fit_exact(self)?;
        Ok((0..self.n_obs())
            .map(|i| self.predictive_lpd(i, &post.mean, &post.cov))
            .collect())
    }

    fn loo_from_natural(&self, i: usize, lambda: &DMatrix<f64>, b: &DVector<f64>) -> Result<f64> {
        self.check_index(i)?;
        let s2 = self.noise_var();
        let xi = self.row(i);
        let lambda_i = lambda - &xi * xi.transpose() / s2;
        let b_i = b - &xi * (self.y[i] / s2);
        let chol = cholesky(lambda_i, "leave-one-out posterior precision")?;
        let mean = chol.solve(&b_i);
        let cov = chol.inverse();
        Ok(self.predictive_lpd(i, &mean, &cov))
    }

    fn predictive_lpd(&self, i: usize, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
        let xi = self.row(i);
        let m = xi.dot(mean);
        let v = (xi.transpose() * cov * &xi)[(0, 0)] + self.noise_var();
        normal_log_pdf(self.y[i], m, v)
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i < self.n_obs() {
            Ok(())
        } else {
            Err(Error::ObservationOutOfRange {
                index: i,
                n_obs: self.n_obs(),
            })
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }
}

/// Multivariate normal posterior or approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub kind: PosteriorKind,
    chol: DMatrix<f64>,
    log_det: f64,
}

impl GaussianPosterior {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, kind: PosteriorKind) -> Result<Self> {
        if cov.shape() != (mean.len(), mean.len()) {
            return Err(Error::Input("covariance shape does not match mean".into()));
        }
        let chol = cholesky(cov.clone(), "posterior covariance")?.unpack();
        let log_det = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(GaussianPosterior {
            mean,
            cov,
            kind,
            chol,
            log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Normalized log density.
    pub fn log_density(&self, theta: &DVector<f64>) -> f64 {
        self.log_density_slice(theta.as_slice())
    }

    fn log_density_slice(&self, theta: &[f64]) -> f64 {
        let d = self.dim();
        // Forward substitution L z = θ - μ.
        let mut z = vec![0.0; d];
        for i in 0..d {
            let mut acc = theta[i] - self.mean[i];
            for j in 0..i {
                acc -= self.chol[(i, j)] * z[j];
            }
            z[i] = acc / self.chol[(i, i)];
        }
        let quad: f64 = z.iter().map(|v| v * v).sum();
        -0.5 * (d as f64 * LN_2PI + self.log_det + quad)
    }

    /// Marginal variances.
    pub fn marginal_variances(&self) -> DVector<f64> {
        self.cov.diagonal()
    }
}

/// Exact conjugate posterior.
pub fn fit_exact(model: &ConjugateLinearModel) -> Result<GaussianPosterior> {
    let (lambda, b) = model.natural_parameters()?;
    let chol = cholesky(lambda, "posterior precision")?;
    let mean = chol.solve(&b);
    GaussianPosterior::new(mean, chol.inverse(), PosteriorKind::Exact)
}

/// Laplace approximation: a Newton step from the prior mean to the mode,
/// with the inverse Hessian of the negative log posterior as covariance.
/// For this model it coincides with the exact posterior.
pub fn fit_laplace(model: &ConjugateLinearModel) -> Result<GaussianPosterior> {
    let p0 = model.prior_precision()?;
    let s2 = model.noise_var();
    let xt = model.x.transpose();
    let hessian = &p0 + (&xt * &model.x) / s2;
    let start = model.prior_mean.clone();
    let residual = &model.y - &model.x * &start;
    // Gradient of the log posterior at the start point; the prior term
    // vanishes at the prior mean.
    let grad = (&xt * residual) / s2;
    let chol = cholesky(hessian, "negative Hessian")?;
    let mode = start + chol.solve(&grad);
    GaussianPosterior::new(mode, chol.inverse(), PosteriorKind::Laplace)
}

/// KL(q‖p)-optimal diagonal Gaussian: exact mean, marginal variances equal
/// to the inverse diagonal of the posterior precision.
pub fn fit_mean_field(model: &ConjugateLinearModel) -> Result<GaussianPosterior> {
    let (lambda, b) = model.natural_parameters()?;
    let mean = cholesky(lambda.clone(), "posterior precision")?.solve(&b);
    let cov = DMatrix::from_diagonal(&lambda.diagonal().map(|v| 1.0 / v));
    GaussianPosterior::new(mean, cov, PosteriorKind::MeanField)
}

pub fn fit(model: &ConjugateLinearModel, kind: PosteriorKind) -> Result<GaussianPosterior> {
    match kind {
        PosteriorKind::Exact => fit_exact(model),
        PosteriorKind::Laplace => fit_laplace(model),
        PosteriorKind::MeanField => fit_mean_field(model),
    }
}

/// `S` i.i.d. draws, one per row of the returned `S × D` matrix.
pub fn sample_posterior(post: &GaussianPosterior, n_draws: usize, seed: u64) -> DMatrix<f64> {
    let draws = sample_rows(post, n_draws, seed);
    let d = post.dim();
    DMatrix::from_row_slice(n_draws, d, &draws)
}

/// Row-major `S × D` draws.
fn sample_rows(post: &GaussianPosterior, n_draws: usize, seed: u64) -> Vec<f64> {
    let d = post.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; n_draws * d];
    let mut z = vec![0.0; d];
    for row in out.chunks_exact_mut(d) {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        for i in 0..d {
            let mut acc = post.mean[i];
            for j in 0..=i {
                acc += post.chol[(i, j)] * z[j];
            }
            row[i] = acc;
        }
    }
    out
}

/// Draw from `post` and evaluate everything the LOO pipeline needs:
/// Gaussian log-likelihoods, the exact unnormalized log posterior (prior
/// plus likelihood) and the log density of `post` itself.
pub fn make_bundle(
    model: &ConjugateLinearModel,
    post: &GaussianPosterior,
    n_draws: usize,
    seed: u64,
) -> Result<DrawsBundle> {
    if post.dim() != model.dim() {
        return Err(Error::Input(format!(
            "posterior has dimension {}, model has {}",
            post.dim(),
            model.dim()
        )));
    }
    if n_draws == 0 {
        return Err(Error::Input("need at least one draw".into()));
    }
    let d = model.dim();
    let n = model.n_obs();
    let draws = sample_rows(post, n_draws, seed);
    let prior = GaussianPosterior::new(
        model.prior_mean.clone(),
        model.prior_cov.clone(),
        PosteriorKind::Exact,
    )?;

    let s2 = model.noise_var();
    let log_norm = -0.5 * (LN_2PI + s2.ln());
    let inv_two_s2 = 0.5 / s2;

    let mut log_lik = vec![0.0; n * n_draws];
    let mut log_p: Vec<f64> = draws
        .chunks_exact(d)
        .map(|theta| prior.log_density_slice(theta))
        .collect();
    let mut xi = vec![0.0; d];
    for (i, col) in log_lik.chunks_exact_mut(n_draws).enumerate() {
        for (j, v) in xi.iter_mut().enumerate() {
            *v = model.x[(i, j)];
        }
        let yi = model.y[i];
        for ((ll, theta), lp) in col.iter_mut().zip(draws.chunks_exact(d)).zip(&mut log_p) {
            let mu: f64 = xi.iter().zip(theta).map(|(a, b)| a * b).sum();
            let r = yi - mu;
            *ll = log_norm - r * r * inv_two_s2;
            *lp += *ll;
        }
    }
    let log_q = draws
        .chunks_exact(d)
        .map(|theta| post.log_density_slice(theta))
        .collect();
    DrawsBundle::from_columns(log_lik, n, log_p, log_q)
}

/// Simulated regression data with `β ~ N(0, I)`, unit noise and a
/// `N(0, 10² I)` prior.
pub fn simulate_lr(n: usize, dim: usize, design: Design, seed: u64) -> Result<ConjugateLinearModel> {
    if n == 0 || dim == 0 {
        return Err(Error::Input("simulation needs n >= 1 and D >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let beta = DVector::from_fn(dim, |_, _| normal());
    let x = match design {
        Design::Independent => DMatrix::from_fn(n, dim, |_, _| normal()),
        Design::Correlated => {
            let shared = CORRELATED_RHO.sqrt();
            let own = (1.0 - CORRELATED_RHO).sqrt();
            let mut x = DMatrix::zeros(n, dim);
            for i in 0..n {
                let common = normal();
                for j in 0..dim {
                    x[(i, j)] = shared * common + own * normal();
                }
            }
            x
        }
    };
    let mean = &x * &beta;
    let y = DVector::from_fn(n, |i, _| mean[i] + DEFAULT_NOISE_SD * normal());
    ConjugateLinearModel::new(
        x,
        y,
        DEFAULT_NOISE_SD,
        DVector::zeros(dim),
        DMatrix::identity(dim, dim) * DEFAULT_PRIOR_SD.powi(2),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_dim(xs: &[f64], ys: &[f64], prior_var: f64) -> ConjugateLinearModel {
        ConjugateLinearModel::new(
            DMatrix::from_column_slice(xs.len(), 1, xs),
            DVector::from_column_slice(ys),
            1.0,
            DVector::zeros(1),
            DMatrix::from_element(1, 1, prior_var),
        )
        .unwrap()
    }

    #[test]
    fn single_observation_update() {
        let post = fit_exact(&one_dim(&[1.0], &[0.0], 1.0)).unwrap();
        assert!(post.mean[0].abs() < 1e-15);
        assert!((post.cov[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn loo_two_zeros_by_hand() {
        // Without y_0 the posterior is N(0, 1/2); the predictive is N(0, 1.5).
        let model = one_dim(&[1.0, 1.0], &[0.0, 0.0], 1.0);
        let expected = -0.5 * (2.0 * std::f64::consts::PI * 1.5).ln();
        assert!((model.exact_loo_lpd(0).unwrap() - expected).abs() < 1e-14);
        assert!((expected + 1.121_671_09).abs() < 1e-8);

        // Midpoint quadrature of ∫ N(0 | θ, 1) N(θ | 0, 1/2) dθ.
        let h = 1e-3;
        let integral: f64 = (-10_000..10_000)
            .map(|k| {
                let t = (k as f64 + 0.5) * h;
                (normal_log_pdf(0.0, t, 1.0) + normal_log_pdf(t, 0.0, 0.5)).exp() * h
            })
            .sum();
        assert!((integral.ln() - expected).abs() < 1e-9);
    }

    #[test]
    fn zero_design_keeps_prior() {
        let model = one_dim(&[0.0, 0.0, 0.0], &[1.0, -2.0, 0.5], 4.0);
        let post = fit_exact(&model).unwrap();
        assert!(post.mean[0].abs() < 1e-15);
        assert!((post.cov[(0, 0)] - 4.0).abs() < 1e-14);
        let loo = model.exact_loo_all().unwrap();
        let full = model.exact_full_all().unwrap();
        for i in 0..3 {
            let prior_pred = normal_log_pdf(model.y[i], 0.0, 1.0);
            assert!((loo[i] - prior_pred).abs() < 1e-14);
            assert!((full[i] - prior_pred).abs() < 1e-14);
        }
    }

    #[test]
    fn vague_prior_approaches_least_squares() {
        let base = simulate_lr(200, 3, Design::Independent, 5).unwrap();
        let model = base
            .with_prior(DVector::zeros(3), DMatrix::identity(3, 3) * 1e8)
            .unwrap();
        let post = fit_exact(&model).unwrap();
        let xt = model.x().transpose();
        let ls = (&xt * model.x()).cholesky().unwrap().solve(&(&xt * model.y()));
        assert!((post.mean - ls).abs().max() < 1e-3);
    }

    #[test]
    fn laplace_equals_exact() {
        for design in [Design::Independent, Design::Correlated] {
            let model = simulate_lr(100, 4, design, 9).unwrap();
            let e = fit_exact(&model).unwrap();
            let l = fit_laplace(&model).unwrap();
            assert_eq!(l.kind, PosteriorKind::Laplace);
            assert!((&e.mean - &l.mean).abs().max() < 1e-12);
            assert!((&e.cov - &l.cov).abs().max() < 1e-12);
        }
    }

    #[test]
    fn mean_field_underdisperses_on_correlated_design() {
        let model = simulate_lr(500, 4, Design::Correlated, 2).unwrap();
        let e = fit_exact(&model).unwrap();
        let mf = fit_mean_field(&model).unwrap();
        assert_eq!(mf.kind, PosteriorKind::MeanField);
        assert!((&e.mean - &mf.mean).abs().max() < 1e-12);
        let (ve, vm) = (e.marginal_variances(), mf.marginal_variances());
        for j in 0..4 {
            assert!(vm[j] < ve[j], "coord {j}: {} !< {}", vm[j], ve[j]);
            for k in 0..4 {
                if j != k {
                    assert_eq!(mf.cov[(j, k)], 0.0);
                }
            }
        }
    }

    #[test]
    fn mean_field_exact_when_factorized() {
        // Orthogonal columns and a diagonal prior give a diagonal posterior.
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]);
        let model = ConjugateLinearModel::new(
            x,
            DVector::from_column_slice(&[0.3, -1.0, 2.0, 0.1]),
            0.7,
            DVector::from_column_slice(&[0.5, -0.5]),
            DMatrix::from_diagonal(&DVector::from_column_slice(&[2.0, 3.0])),
        )
        .unwrap();
        let e = fit_exact(&model).unwrap();
        let mf = fit_mean_field(&model).unwrap();
        assert!((&e.mean - &mf.mean).abs().max() < 1e-14);
        assert!((&e.cov - &mf.cov).abs().max() < 1e-14);
    }

    #[test]
    fn invalid_models_rejected() {
        let x = DMatrix::from_element(2, 1, 1.0);
        let y = DVector::zeros(2);
        let mean = DVector::zeros(1);
        let cov = DMatrix::from_element(1, 1, 1.0);
        assert!(ConjugateLinearModel::new(x.clone(), y.clone(), 0.0, mean.clone(), cov.clone())
            .is_err());
        assert!(ConjugateLinearModel::new(
            x.clone(),
            y.clone(),
            1.0,
            mean.clone(),
            DMatrix::from_element(1, 1, -1.0)
        )
        .is_err());
        assert!(ConjugateLinearModel::new(x, DVector::zeros(3), 1.0, mean, cov).is_err());
    }

    #[test]
    fn log_density_matches_scalar_case() {
        let post = GaussianPosterior::new(
            DVector::from_element(1, 1.0),
            DMatrix::from_element(1, 1, 4.0),
            PosteriorKind::Exact,
        )
        .unwrap();
        let got = post.log_density(&DVector::from_element(1, 2.5));
        assert!((got - normal_log_pdf(2.5, 1.0, 4.0)).abs() < 1e-14);
    }

    #[test]
    fn single_draw_shape() {
        let post = fit_exact(&simulate_lr(10, 3, Design::Independent, 1).unwrap()).unwrap();
        let draws = sample_posterior(&post, 1, 0);
        assert_eq!(draws.shape(), (1, 3));
    }

    #[test]
    fn simulation_is_seeded() {
        let a = simulate_lr(50, 3, Design::Correlated, 4).unwrap();
        let b = simulate_lr(50, 3, Design::Correlated, 4).unwrap();
        let c = simulate_lr(50, 3, Design::Correlated, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn model_json_roundtrip() {
        let model = simulate_lr(5, 2, Design::Independent, 3).unwrap();
        let json = serde_json::to_value(&model).unwrap();
        for key in ["x", "y", "noise_sd", "prior_mean", "prior_cov"] {
            assert!(json.get(key).is_some());
        }
        assert_eq!(json["x"].as_array().unwrap().len(), 5);
        let back: ConjugateLinearModel = serde_json::from_value(json).unwrap();
        assert_eq!(back, model);
    }
}
