use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("refusing to build a dense {n_spins}-spin matrix (limit is {limit})")]
    TooLarge { n_spins: usize, limit: usize },

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("non-finite amplitude encountered at t = {time}")]
    NonFinite { time: f64 },

    #[error("norm drifted by {drift:.3e} at t = {time}; reduce dt")]
    NormDrift { time: f64, drift: f64 },

    #[error("state is outside the symmetry sector (residual {residual:.3e})")]
    OutsideSector { residual: f64 },

    #[error("ensemble rejected: {0}")]
    Ensemble(String),

    #[error("scan aborted after {completed} completed points: {source}")]
    ScanAborted { completed: usize, source: Box<Error> },

    #[error("fit refused: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag, used in the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::TooLarge { .. } => "too_large",
            Error::Schedule(_) => "schedule",
            Error::NonFinite { .. } => "non_finite",
            Error::NormDrift { .. } => "norm_drift",
            Error::OutsideSector { .. } => "outside_sector",
            Error::Ensemble(_) => "ensemble",
            Error::ScanAborted { .. } => "scan_aborted",
            Error::Fit(_) => "fit",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
