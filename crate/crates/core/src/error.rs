use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing required column `{column}`")]
    Schema { column: String },

    #[error("row error at line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("group balancing failed: achieved gap {achieved_gap:.4} exceeds tolerance {tolerance:.4}")]
    BalanceFailure { achieved_gap: f64, tolerance: f64 },

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("infeasible clustering: {distinct} distinct feature rows but k = {k}")]
    Infeasible { distinct: usize, k: usize },

    #[error(
        "value iteration did not converge: residual {residual:.3e} >= tol {tol:.3e} after {iterations} sweeps \
         (the model may be improper; retry with discount < 1)"
    )]
    NonConvergence { residual: f64, tol: f64, iterations: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("empty support: {0}")]
    EmptySupport(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("singular system for policy {policy:?}: terminal state unreachable")]
    Singular { policy: Vec<usize> },

    #[error("ambiguous partition: diagnosis category {category} emitted by blocks {blocks:?}")]
    Ambiguity { category: String, blocks: Vec<usize> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Validation failures map to exit code 1; everything that went wrong
    /// while running a well-formed request maps to 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Schema { .. }
                | Error::Row { .. }
                | Error::Integrity(_)
                | Error::Lookup(_)
                | Error::Dimension(_)
                | Error::Infeasible { .. }
                | Error::Precondition(_)
                | Error::EmptySupport(_)
                | Error::Config(_)
                | Error::Csv(_)
                | Error::Json(_)
                | Error::Ambiguity { .. }
        )
    }
}
