use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input at row {row}, column {column}: {message}")]
    Malformed {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid draws: {0}")]
    Validation(String),

    #[error("observation index {index} out of range for {n_obs} observations")]
    ObservationOutOfRange { index: usize, n_obs: usize },

    #[error("insufficient draws for smoothing: got {got}, need at least {need}")]
    InsufficientDraws { got: usize, need: usize },

    #[error("insufficient tail for Pareto fit: got {got} exceedances, need at least {need}")]
    InsufficientTail { got: usize, need: usize },

    #[error("degenerate tail: exceedances have zero variance")]
    DegenerateTail,

    #[error("invalid Pareto tail sample: {0}")]
    InvalidTail(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("need at least {need} subsampled values for a variance estimate, got {got}")]
    DegreesOfFreedom { got: usize, need: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("observation {index}: {source}")]
    AtObservation {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
