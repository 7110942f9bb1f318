//! Command-line front end for subsampled PSIS-LOO.
//!
//! Each subcommand is a plain function over its parsed arguments so the
//! commands can be driven from tests without spawning a process.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ppsloo_core::experiment::{run_se_experiment, write_se_csv, SeExperimentConfig, SeRow};
use ppsloo_core::gaussian::{fit, fit_laplace, make_bundle, simulate_lr};
use ppsloo_core::pipeline::{approximation_khat, estimate_full, estimate_with_table};
use ppsloo_core::{
    compare_models, ComparisonReport, ConjugateLinearModel, Design, DrawsBundle, DrawsFormat,
    ElpdReport, PosteriorKind, SamplingPlan, Strategy, Subsample,
};

#[derive(Debug, Parser)]
#[command(name = "ppsloo", version, about = "Subsampled PSIS-LOO elpd estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a regression dataset, fit an approximation and write draws.
    Simulate(SimulateArgs),
    /// Estimate elpd_loo from a draws file.
    Estimate(EstimateArgs),
    /// Compare two models on a shared subsample.
    Compare(CompareArgs),
    /// Standard error of PPS and SRS estimates across dataset sizes.
    Experiment(ExperimentArgs),
    /// Load a draws file and report its shape and diagnostics.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value = "independent")]
    pub design: Design,
    /// Number of posterior draws.
    #[arg(long, default_value_t = 4000)]
    pub s: usize,
    #[arg(long, default_value = "exact")]
    pub approx: PosteriorKind,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = "csv")]
    pub format: DrawsFormat,
    /// Output directory; receives `model.json` and `draws.<format>`.
    #[arg(long)]
    pub output: PathBuf,
}

/// Where the point lpd for `lpd_point`, `lpd_at_q_mean` and `lpd_at_q_mode`
/// comes from.
#[derive(Debug, Clone, Args, Serialize)]
pub struct PointSource {
    /// Model JSON; the point lpd is evaluated at the fitted approximation.
    #[arg(long, conflicts_with = "lpd")]
    pub model: Option<PathBuf>,
    /// Precomputed point lpd, as a JSON array or one value per line.
    #[arg(long)]
    pub lpd: Option<PathBuf>,
    /// Approximation fitted to `--model`.
    #[arg(long, default_value = "exact")]
    pub approx: PosteriorKind,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    #[arg(long)]
    pub draws: PathBuf,
    /// Draws format; guessed from the extension when omitted.
    #[arg(long)]
    pub format: Option<DrawsFormat>,
    #[arg(long, default_value = "lpd_full")]
    pub strategy: Strategy,
    #[arg(long, required_unless_present = "full")]
    pub m: Option<usize>,
    #[arg(long, required_unless_present = "full")]
    pub seed: Option<u64>,
    /// Smooth every observation instead of subsampling.
    #[arg(long)]
    pub full: bool,
    #[command(flatten)]
    pub point: PointSource,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompareArgs {
    /// Draws of the first model; the sampling plan is computed from it.
    #[arg(long)]
    pub draws_a: PathBuf,
    #[arg(long)]
    pub draws_b: PathBuf,
    #[arg(long)]
    pub format: Option<DrawsFormat>,
    #[arg(long, default_value = "lpd_full")]
    pub strategy: Strategy,
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub point: PointSource,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExperimentArgs {
    /// Dataset sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
    pub ns: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub m: usize,
    #[arg(long, default_value_t = 200)]
    pub replicates: usize,
    #[arg(long, default_value_t = 1000)]
    pub s: usize,
    #[arg(long, default_value_t = 5)]
    pub d: usize,
    #[arg(long, default_value = "independent")]
    pub design: Design,
    #[arg(long, default_value = "exact")]
    pub approx: PosteriorKind,
    #[arg(long)]
    pub seed: u64,
    /// CSV destination; the resolved config goes to `<output>.config.json`.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValidateArgs {
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long)]
    pub format: Option<DrawsFormat>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct SimulateOutput {
    pub config: SimulateArgs,
    pub model_path: PathBuf,
    pub draws_path: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct EstimateOutput {
    pub config: EstimateArgs,
    pub report: ElpdReport,
    /// Distinct observations whose importance ratios were smoothed.
    pub psis_evaluations: usize,
    pub clamped_count: usize,
    pub approximation_khat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsample: Option<Subsample>,
    pub timings: Timings,
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub load_seconds: f64,
    /// Size measures and alias table, `O(n)`.
    pub plan_seconds: f64,
    /// Subsampling, smoothing and combining; `O(mS)` when subsampling.
    pub estimate_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct CompareOutput {
    pub config: CompareArgs,
    pub comparison: ComparisonReport,
}

#[derive(Debug, Serialize)]
pub struct ExperimentOutput {
    pub config: ExperimentArgs,
    pub rows: Vec<SeRow>,
}

#[derive(Debug, Serialize)]
pub struct ValidateOutput {
    pub config: ValidateArgs,
    pub format: DrawsFormat,
    pub n_obs: usize,
    pub n_draws: usize,
    pub approximation_khat: Option<f64>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => {
            let out = cmd_simulate(&a)?;
            emit_json(&out, None)
        }
        Command::Estimate(a) => {
            let out = cmd_estimate(&a)?;
            emit_json(&out, a.output.as_deref())
        }
        Command::Compare(a) => {
            let out = cmd_compare(&a)?;
            emit_json(&out, a.output.as_deref())
        }
        Command::Experiment(a) => {
            let out = cmd_experiment(&a)?;
            let mut csv = Vec::new();
            write_se_csv(&out.rows, &mut csv)?;
            match &a.output {
                Some(path) => {
                    write_file(path, &csv)?;
                    let cfg = config_path(path);
                    write_file(&cfg, &json_bytes(&out.config)?)?;
                }
                None => {
                    eprintln!("{}", serde_json::to_string(&out.config)?);
                    std::io::stdout().write_all(&csv)?;
                }
            }
            Ok(())
        }
        Command::Validate(a) => {
            let out = cmd_validate(&a)?;
            emit_json(&out, a.output.as_deref())
        }
    }
}

/// Simulate, fit `--approx` and write `model.json` (with the config under
/// `config`) and the draws file.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<SimulateOutput> {
    let model = simulate_lr(args.n, args.d, args.design, args.seed)?;
    let post = fit(&model, args.approx)?;
    let bundle = make_bundle(&model, &post, args.s, args.seed.wrapping_add(1))?;

    fs::create_dir_all(&args.output)
        .with_context(|| format!("creating {}", args.output.display()))?;
    let model_path = args.output.join("model.json");
    let draws_path = args.output.join(format!("draws.{}", args.format.extension()));

    let mut doc = serde_json::to_value(&model)?;
    doc["config"] = serde_json::to_value(args)?;
    write_file(&model_path, &json_bytes(&doc)?)?;
    bundle.save(&draws_path, args.format)?;
    Ok(SimulateOutput {
        config: args.clone(),
        model_path,
        draws_path,
    })
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<EstimateOutput> {
    let start = Instant::now();
    let bundle = load_bundle(&args.draws, args.format)?;
    let load_seconds = start.elapsed().as_secs_f64();
    let mut out = estimate_bundle(&bundle, args)?;
    out.timings.load_seconds = load_seconds;
    Ok(out)
}

/// Everything [`cmd_estimate`] does after loading the draws.
pub fn estimate_bundle(bundle: &DrawsBundle, args: &EstimateArgs) -> Result<EstimateOutput> {
    let khat = approximation_khat(bundle);
    let mut timings = Timings::default();
    if args.full {
        let start = Instant::now();
        let est = estimate_full(bundle)?;
        timings.estimate_seconds = start.elapsed().as_secs_f64();
        return Ok(EstimateOutput {
            config: args.clone(),
            psis_evaluations: bundle.n_obs(),
            report: est.report,
            clamped_count: 0,
            approximation_khat: khat,
            subsample: None,
            timings,
        });
    }
    let (Some(m), Some(seed)) = (args.m, args.seed) else {
        bail!("--m and --seed are required unless --full is given");
    };
    let start = Instant::now();
    let plan = build_plan(args.strategy, bundle, &args.point)?;
    let table = plan.alias_table();
    timings.plan_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let est = estimate_with_table(bundle, &plan, &table, m, seed)?;
    timings.estimate_seconds = start.elapsed().as_secs_f64();
    if est.report.khat_bad_fraction > 0.0 {
        log::warn!(
            "k̂ > 0.7 for {:.1}% of sampled observations",
            100.0 * est.report.khat_bad_fraction
        );
    }
    Ok(EstimateOutput {
        config: args.clone(),
        report: est.report,
        psis_evaluations: est.psis_evaluations,
        clamped_count: plan.clamped_count,
        approximation_khat: khat,
        subsample: Some(est.subsample),
        timings,
    })
}

pub fn cmd_compare(args: &CompareArgs) -> Result<CompareOutput> {
    let a = load_bundle(&args.draws_a, args.format)?;
    let b = load_bundle(&args.draws_b, args.format)?;
    let plan = build_plan(args.strategy, &a, &args.point)?;
    let sub = ppsloo_core::sampling::draw_subsample(&plan.alias_table(), args.m, args.seed)?;
    let comparison = compare_models(&a, &b, &plan, &sub)?;
    Ok(CompareOutput {
        config: args.clone(),
        comparison,
    })
}

pub fn cmd_experiment(args: &ExperimentArgs) -> Result<ExperimentOutput> {
    if args.ns.is_empty() {
        bail!("--ns must list at least one dataset size");
    }
    let rows = run_se_experiment(&SeExperimentConfig {
        ns: args.ns.clone(),
        m: args.m,
        replicates: args.replicates,
        n_draws: args.s,
        dim: args.d,
        design: args.design,
        approx: args.approx,
        seed: args.seed,
    })?;
    Ok(ExperimentOutput {
        config: args.clone(),
        rows,
    })
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<ValidateOutput> {
    let format = resolve_format(&args.draws, args.format)?;
    let bundle = load_bundle(&args.draws, Some(format))?;
    Ok(ValidateOutput {
        config: args.clone(),
        format,
        n_obs: bundle.n_obs(),
        n_draws: bundle.n_draws(),
        approximation_khat: approximation_khat(&bundle),
    })
}

fn resolve_format(path: &Path, format: Option<DrawsFormat>) -> Result<DrawsFormat> {
    match format.or_else(|| DrawsFormat::from_path(path)) {
        Some(f) => Ok(f),
        None => bail!(
            "cannot tell the format of {}; pass --format csv|ndjson",
            path.display()
        ),
    }
}

fn load_bundle(path: &Path, format: Option<DrawsFormat>) -> Result<DrawsBundle> {
    let format = resolve_format(path, format)?;
    Ok(DrawsBundle::load(path, format)?)
}

fn build_plan(strategy: Strategy, bundle: &DrawsBundle, src: &PointSource) -> Result<SamplingPlan> {
    let point = if strategy.needs_point_lpd() {
        Some(point_lpd(strategy, src)?)
    } else {
        None
    };
    Ok(SamplingPlan::compute(strategy, Some(bundle), point.as_deref())?)
}

fn point_lpd(strategy: Strategy, src: &PointSource) -> Result<Vec<f64>> {
    if let Some(path) = &src.lpd {
        return read_lpd(path);
    }
    let Some(path) = &src.model else {
        bail!("strategy {strategy} needs --model or --lpd");
    };
    let model = ConjugateLinearModel::load(path)?;
    let theta = match strategy {
        Strategy::LpdAtQMode => fit_laplace(&model)?.mean,
        _ => fit(&model, src.approx)?.mean,
    };
    Ok(model.point_lpd(&theta))
}

/// A JSON array of numbers or one number per line.
pub fn read_lpd(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()));
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .with_context(|| format!("{}:{}: not a number", path.display(), i + 1))
        })
        .collect()
}

fn config_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".config.json");
    PathBuf::from(name)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn emit_json<T: Serialize>(value: &T, output: Option<&Path>) -> Result<()> {
    let bytes = json_bytes(value)?;
    match output {
        Some(path) => write_file(path, &bytes),
        None => Ok(std::io::stdout().write_all(&bytes)?),
    }
}
