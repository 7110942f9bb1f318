//! Posterior draws: the log-likelihood matrix plus target and proposal log
//! densities for every draw, and their on-disk formats.
//!
//! Two text formats are supported. CSV has the header
//! `log_p,log_q,loglik_0,...,loglik_{n-1}` and one row per draw. NDJSON has
//! one object per line, `{"log_p": f, "log_q": f, "log_lik": [f, ...]}`.
//! In both, a missing `log_q` means the draws come from the exact posterior
//! and `log_q = log_p`.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, log_sum_exp_paired};

/// Index of an observation (a column of the log-likelihood matrix).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObservationId(pub usize);

impl ObservationId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ObservationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrawsFormat {
    Csv,
    Ndjson,
}

impl DrawsFormat {
    /// Guess the format from a file extension (`.csv`, `.ndjson`, `.jsonl`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(DrawsFormat::Csv),
            "ndjson" | "jsonl" => Some(DrawsFormat::Ndjson),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            DrawsFormat::Csv => "csv",
            DrawsFormat::Ndjson => "ndjson",
        }
    }
}

impl FromStr for DrawsFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DrawsFormat::Csv),
            "ndjson" | "jsonl" => Ok(DrawsFormat::Ndjson),
            other => Err(Error::Config(format!("unknown draws format `{other}`"))),
        }
    }
}

impl fmt::Display for DrawsFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

/// Draws from a posterior (or an approximation of it) with everything the
/// LOO machinery needs.
///
/// The log-likelihood matrix is stored column-major by observation: the
/// `S` values for observation `i` are contiguous, which is the access
/// pattern of per-observation smoothing.
///
/// `log_p` may be unnormalized; only differences `log_p - log_q` across
/// draws are ever used.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawsBundle {
    log_lik: Vec<f64>,
    log_p: Vec<f64>,
    log_q: Vec<f64>,
    n_obs: usize,
    n_draws: usize,
}

impl DrawsBundle {
    /// Build from a column-major log-likelihood buffer of length
    /// `n_obs * log_p.len()`.
    pub fn from_columns(
        log_lik: Vec<f64>,
        n_obs: usize,
        log_p: Vec<f64>,
        log_q: Vec<f64>,
    ) -> Result<Self> {
        let n_draws = log_p.len();
        if n_obs == 0 {
            return Err(Error::Validation("need at least one observation".into()));
        }
        if n_draws == 0 {
            return Err(Error::Validation("need at least one draw".into()));
        }
        if log_q.len() != n_draws {
            return Err(Error::Validation(format!(
                "log_q has length {}, expected {n_draws}",
                log_q.len()
            )));
        }
        if log_lik.len() != n_obs * n_draws {
            return Err(Error::Validation(format!(
                "log_lik has {} entries, expected {n_draws} x {n_obs}",
                log_lik.len()
            )));
        }
        for (s, (&p, &q)) in log_p.iter().zip(&log_q).enumerate() {
            if !p.is_finite() {
                return Err(Error::Validation(format!("non-finite log_p {p} at draw {s}")));
            }
            if !q.is_finite() {
                return Err(Error::Validation(format!("non-finite log_q {q} at draw {s}")));
            }
        }
        if let Some(pos) = log_lik.iter().position(|v| !v.is_finite()) {
            let (i, s) = (pos / n_draws, pos % n_draws);
            return Err(Error::Validation(format!(
                "non-finite log_lik {} at draw {s}, observation {i}",
                log_lik[pos]
            )));
        }
        Ok(DrawsBundle {
            log_lik,
            log_p,
            log_q,
            n_obs,
            n_draws,
        })
    }

    /// Build from draw-major rows (`rows[s][i]`).
    pub fn from_rows(rows: &[Vec<f64>], log_p: Vec<f64>, log_q: Vec<f64>) -> Result<Self> {
        let n_obs = rows.first().map_or(0, Vec::len);
        if let Some((s, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n_obs) {
            return Err(Error::Validation(format!(
                "draw {s} has {} log_lik values, expected {n_obs}",
                row.len()
            )));
        }
        let n_draws = rows.len();
        let mut log_lik = vec![0.0; n_obs * n_draws];
        for (s, row) in rows.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                log_lik[i * n_draws + s] = v;
            }
        }
        Self::from_columns(log_lik, n_obs, log_p, log_q)
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn log_p(&self) -> &[f64] {
        &self.log_p
    }

    pub fn log_q(&self) -> &[f64] {
        &self.log_q
    }

    /// Log-likelihood values of observation `i` across all draws.
    pub fn column(&self, i: ObservationId) -> &[f64] {
        let start = i.0 * self.n_draws;
        &self.log_lik[start..start + self.n_draws]
    }

    pub fn log_lik(&self, draw: usize, i: ObservationId) -> f64 {
        self.log_lik[i.0 * self.n_draws + draw]
    }

    /// Checked conversion of a raw index into an [`ObservationId`].
    pub fn obs(&self, index: usize) -> Result<ObservationId> {
        if index < self.n_obs {
            Ok(ObservationId(index))
        } else {
            Err(Error::ObservationOutOfRange {
                index,
                n_obs: self.n_obs,
            })
        }
    }

    pub fn observations(&self) -> impl Iterator<Item = ObservationId> {
        (0..self.n_obs).map(ObservationId)
    }

    /// `log_p - log_q` per draw: the log importance ratio of the target
    /// posterior against the proposal, up to a constant.
    pub fn log_posterior_ratios(&self) -> Vec<f64> {
        self.log_p
            .iter()
            .zip(&self.log_q)
            .map(|(p, q)| p - q)
            .collect()
    }

    /// Mean of each log-likelihood column.
    pub fn column_means(&self) -> Vec<f64> {
        self.observations()
            .map(|i| crate::math::mean(self.column(i)))
            .collect()
    }

    fn row(&self, draw: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_obs).map(move |i| self.log_lik[i * self.n_draws + draw])
    }

    pub fn load(path: impl AsRef<Path>, format: DrawsFormat) -> Result<Self> {
        load_draws(path, format)
    }

    pub fn save(&self, path: impl AsRef<Path>, format: DrawsFormat) -> Result<()> {
        save_draws(self, path, format)
    }
}

/// Read and validate a draws file.
pub fn load_draws(path: impl AsRef<Path>, format: DrawsFormat) -> Result<DrawsBundle> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        DrawsFormat::Csv => read_csv(reader),
        DrawsFormat::Ndjson => read_ndjson(reader),
    }
}

pub fn save_draws(bundle: &DrawsBundle, path: impl AsRef<Path>, format: DrawsFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let res = match format {
        DrawsFormat::Csv => write_csv(bundle, &mut out),
        DrawsFormat::Ndjson => write_ndjson(bundle, &mut out),
    };
    res.and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

// `{:?}` prints the shortest representation that parses back to the same
// bits, switching to exponent notation for very large or small magnitudes.
fn write_csv(bundle: &DrawsBundle, out: &mut impl Write) -> std::io::Result<()> {
    write!(out, "log_p,log_q")?;
    for i in 0..bundle.n_obs {
        write!(out, ",loglik_{i}")?;
    }
    writeln!(out)?;
    for s in 0..bundle.n_draws {
        write!(out, "{:?},{:?}", bundle.log_p[s], bundle.log_q[s])?;
        for v in bundle.row(s) {
            write!(out, ",{v:?}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn write_ndjson(bundle: &DrawsBundle, out: &mut impl Write) -> std::io::Result<()> {
    for s in 0..bundle.n_draws {
        let line = DrawLine {
            log_p: bundle.log_p[s],
            log_q: Some(bundle.log_q[s]),
            log_lik: bundle.row(s).collect(),
        };
        serde_json::to_writer(&mut *out, &line)?;
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct DrawLine {
    log_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    log_q: Option<f64>,
    log_lik: Vec<f64>,
}

/// Row-wise accumulator shared by both readers.
#[derive(Default)]
struct RowCollector {
    rows: Vec<Vec<f64>>,
    log_p: Vec<f64>,
    log_q: Vec<f64>,
}

impl RowCollector {
    fn push(&mut self, row: usize, log_p: f64, log_q: f64, log_lik: Vec<f64>) -> Result<()> {
        if let Some(first) = self.rows.first() {
            if first.len() != log_lik.len() {
                return Err(Error::Validation(format!(
                    "row {row} has {} log_lik values, expected {}",
                    log_lik.len(),
                    first.len()
                )));
            }
        }
        if !log_p.is_finite() {
            return Err(Error::Validation(format!(
                "non-finite value {log_p} at row {row}, column log_p"
            )));
        }
        if !log_q.is_finite() {
            return Err(Error::Validation(format!(
                "non-finite value {log_q} at row {row}, column log_q"
            )));
        }
        if let Some(j) = log_lik.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value {} at row {row}, column loglik_{j}",
                log_lik[j]
            )));
        }
        self.rows.push(log_lik);
        self.log_p.push(log_p);
        self.log_q.push(log_q);
        Ok(())
    }

    fn finish(self) -> Result<DrawsBundle> {
        if self.rows.is_empty() {
            return Err(Error::Validation("no draws in input".into()));
        }
        DrawsBundle::from_rows(&self.rows, self.log_p, self.log_q)
    }
}

fn read_csv(reader: impl std::io::Read) -> Result<DrawsBundle> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Malformed {
            row: 0,
            column: "header".into(),
            message: e.to_string(),
        })?
        .clone();

    let mut log_p_col = None;
    let mut log_q_col = None;
    let mut lik_cols = Vec::new();
    for (c, name) in header.iter().enumerate() {
        match name {
            "log_p" => log_p_col = Some(c),
            "log_q" => log_q_col = Some(c),
            other => {
                let idx = other
                    .strip_prefix("loglik_")
                    .and_then(|d| d.parse::<usize>().ok())
                    .ok_or_else(|| Error::Malformed {
                        row: 0,
                        column: other.to_string(),
                        message: "unexpected header field".into(),
                    })?;
                if idx != lik_cols.len() {
                    return Err(Error::Malformed {
                        row: 0,
                        column: other.to_string(),
                        message: format!("expected loglik_{}", lik_cols.len()),
                    });
                }
                lik_cols.push(c);
            }
        }
    }
    let log_p_col = log_p_col.ok_or_else(|| Error::Malformed {
        row: 0,
        column: "log_p".into(),
        message: "missing required column".into(),
    })?;

    let mut rows = RowCollector::default();
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::Malformed {
            row,
            column: "*".into(),
            message: e.to_string(),
        })?;
        if record.len() != header.len() {
            return Err(Error::Validation(format!(
                "row {row} has {} fields, header has {}",
                record.len(),
                header.len()
            )));
        }
        let field = |c: usize| -> Result<f64> {
            record[c].parse::<f64>().map_err(|e| Error::Malformed {
                row,
                column: header[c].to_string(),
                message: format!("`{}`: {e}", &record[c]),
            })
        };
        let log_p = field(log_p_col)?;
        let log_q = match log_q_col {
            Some(c) => field(c)?,
            None => log_p,
        };
        let log_lik = lik_cols.iter().map(|&c| field(c)).collect::<Result<Vec<_>>>()?;
        rows.push(row, log_p, log_q, log_lik)?;
    }
    rows.finish()
}

fn read_ndjson(reader: impl BufRead) -> Result<DrawsBundle> {
    let mut rows = RowCollector::default();
    for (r, line) in reader.lines().enumerate() {
        let row = r + 1;
        let line = line.map_err(|e| Error::Malformed {
            row,
            column: "*".into(),
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let draw: DrawLine = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            row,
            column: format!("char {}", e.column()),
            message: e.to_string(),
        })?;
        let log_q = draw.log_q.unwrap_or(draw.log_p);
        rows.push(row, draw.log_p, log_q, draw.log_lik)?;
    }
    rows.finish()
}

/// Full-data posterior log predictive density `log p(y_i | y)`.
///
/// With draws from a proposal `q` this is the self-normalized importance
/// sampling estimate under weights `exp(log_p - log_q)`; with exact
/// posterior draws it reduces to the log of the mean likelihood.
pub fn full_data_lpd(bundle: &DrawsBundle, i: ObservationId) -> f64 {
    let lw = bundle.log_posterior_ratios();
    lpd_with_log_weights(bundle.column(i), &lw)
}

/// [`full_data_lpd`] for every observation, sharing the weight computation.
pub fn full_data_lpd_all(bundle: &DrawsBundle) -> Vec<f64> {
    let lw = bundle.log_posterior_ratios();
    bundle
        .observations()
        .map(|i| lpd_with_log_weights(bundle.column(i), &lw))
        .collect()
}

fn lpd_with_log_weights(column: &[f64], log_weights: &[f64]) -> f64 {
    log_sum_exp_paired(column, log_weights) - log_sum_exp(log_weights)
}
