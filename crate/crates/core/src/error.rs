use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the command line to choose an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "integral did not converge: estimate {estimate:e}, error {error:e} \
         (requested {requested:e}) after {intervals} subintervals"
    )]
    Integration {
        estimate: f64,
        error: f64,
        requested: f64,
        intervals: usize,
    },

    #[error("objective is flat over the search interval (relative variation {variation:e})")]
    DegenerateObjective { variation: f64 },

    #[error("optimum at {at:e} is not stationary (relative slope {slope:e})")]
    NotStationary { at: f64, slope: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    #[error("band too narrow: {have} bins available, {need} required")]
    BandTooNarrow { have: usize, need: usize },

    #[error("frequency {freq_hz} Hz lies outside the spectrum span [{lo_hz}, {hi_hz}] Hz")]
    OutsideSpan { freq_hz: f64, lo_hz: f64, hi_hz: f64 },

    #[error("bin rejection removed {fraction:.3} of the band (limit {limit:.3}); data look contaminated")]
    Contamination { fraction: f64, limit: f64 },

    #[error("campaign failed: {failed} of {total} repetitions failed")]
    CampaignFailed { failed: usize, total: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed data file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter { .. }
            | Error::InvalidSignal(_)
            | Error::Config(_)
            | Error::Json(_)
            | Error::Format { .. } => ErrorKind::Config,
            Error::Io { .. } => ErrorKind::Io,
            _ => ErrorKind::Numerical,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
