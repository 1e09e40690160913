use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A record or row violates a data invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("record {id}: observed time {time} exceeds horizon {horizon}")]
    Horizon { id: String, time: u32, horizon: u32 },

    /// Malformed input file, addressed by 1-based data row and column name.
    #[error("row {row}, column `{column}`: {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no model term was selected during boosting; widen the smoothing parameter bounds towards smaller values or run more iterations")]
    EmptySelection,

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: String, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by user input or configuration rather than a
    /// failure during computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::Horizon { .. }
                | Error::Cell { .. }
                | Error::MissingColumn(_)
                | Error::Config(_)
                | Error::Domain(_)
                | Error::Version { .. }
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}
