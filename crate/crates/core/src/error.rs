use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("matrix is rank deficient: column {column} has residual norm {norm:.3e} after orthogonalization")]
    RankDeficient { column: usize, norm: f64 },

    #[error("point is not on the Stiefel manifold: ||B^T B - I||_F = {defect:.3e}")]
    Infeasible { defect: f64 },

    #[error("missing argument: {0}")]
    MissingArgument(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("objective is not finite at the initial point")]
    NonFiniteInitial,

    #[error("objective is not finite when perturbing entry ({row}, {col})")]
    NonFiniteObjective { row: usize, col: usize },

    #[error("objective callback failed: {0}")]
    Objective(String),

    #[error("objective callback failed at iteration {iteration}: {message}")]
    Callback { iteration: usize, message: String },

    #[error("invalid dataset{}: {message}", row.map(|r| format!(" (row {r})")).unwrap_or_default())]
    InvalidDataset { row: Option<usize>, message: String },

    #[error("estimating equation method `{method}` is not implemented: {detail}")]
    UnimplementedMethod {
        method: &'static str,
        detail: &'static str,
    },

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("internal numerical error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(
        context: &'static str,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
