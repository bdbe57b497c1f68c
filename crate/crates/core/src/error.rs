use thiserror::Error;

/// Errors raised by the extrapolation pipeline and the numerical adapters.
#[derive(Debug, Error)]
pub enum BbpnError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("conflicting values at h = {h}, t = {t:?}: {first} vs {second}")]
    DataConsistency {
        h: f64,
        t: Vec<f64>,
        first: f64,
        second: f64,
    },

    #[error("gram matrix is not positive definite (nugget {nugget:e}, condition estimate {condition:e})")]
    Conditioning { nugget: f64, condition: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("rational extrapolation broke down at tableau cell ({row}, {col})")]
    RationalBreakdown { row: usize, col: usize },

    #[error("integration produced a non-finite state at step {step}")]
    Divergence { step: usize },

    #[error("power iteration broke down at iteration {iteration}")]
    Breakdown { iteration: usize },

    #[error("spectral solver blew up at step {step}")]
    BlowUp { step: usize },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{phase} failed: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<BbpnError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl BbpnError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        BbpnError::InvalidArgument(msg.into())
    }

    /// Wraps the error with the name of the experiment phase that raised it.
    pub fn in_phase(self, phase: &'static str) -> Self {
        BbpnError::Phase {
            phase,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, BbpnError>;
