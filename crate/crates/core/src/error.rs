use thiserror::Error;

/// Errors produced by the estimation and algebra routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix is singular or ill-conditioned (condition estimate {condition:.3e})")]
    Conditioning { condition: f64 },

    #[error("insufficient exceedances: {k} retained, at least {min} required")]
    InsufficientExceedances { k: usize, min: usize },

    #[error("degenerate margin in column {column}: all values are equal")]
    DegenerateMargin { column: usize },

    #[error("degenerate projection: target {index} lies in the span of the conditioning variables")]
    DegenerateProjection { index: usize },

    #[error("degenerate angular variance ({value:.3e}); the pair looks asymptotically independent")]
    DegenerateVariance { value: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the numbers rather than the input format.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Conditioning { .. }
                | Error::InsufficientExceedances { .. }
                | Error::DegenerateProjection { .. }
                | Error::DegenerateVariance { .. }
                | Error::Numerical(_)
                | Error::Domain(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
