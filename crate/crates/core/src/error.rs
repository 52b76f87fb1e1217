use std::path::PathBuf;

/// Errors produced by training, incremental updates, data handling and the harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),

    /// Pseudoinverse-based increments assume a vanishing regularizer.
    #[error(
        "incremental BLS updates require lambda <= {threshold:e} (got {lambda:e}); \
         the pseudoinverse recursions only hold as the regularizer tends to zero, \
         use the correntropy model's incremental updates for arbitrary regularization"
    )]
    RegularizedIncrement { lambda: f64, threshold: f64 },

    #[error("unsupported task: {0}")]
    UnsupportedTask(String),

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
