use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parameter outside its domain: {0}")]
    Domain(String),

    #[error("index {index} out of range 1..={len}")]
    Index { index: usize, len: usize },

    #[error("covariance matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("particle filter degenerated at step {step}: every weight is zero")]
    FilterDegeneracy { step: usize },

    #[error("regime filter diverged: every regime has zero conditional density")]
    FilterDivergence,

    #[error("startup failed: {0}")]
    Startup(String),

    #[error("grid budget exceeded: {required:.3e} > {budget:.3e}")]
    BudgetExceeded { required: f64, budget: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("data error at line {row}{}: {message}", column.as_ref().map(|c| format!(", column {c}")).unwrap_or_default())]
    Data {
        row: usize,
        column: Option<String>,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn data(row: usize, column: Option<&str>, message: impl Into<String>) -> Self {
        Error::Data {
            row,
            column: column.map(str::to_owned),
            message: message.into(),
        }
    }

    /// True for failures that stem from the numerics rather than from inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite(_)
                | Error::FilterDegeneracy { .. }
                | Error::FilterDivergence
                | Error::Startup(_)
                | Error::Numerical(_)
        )
    }
}
