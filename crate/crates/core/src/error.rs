use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("QP is not convex (minimum eigenvalue {min_eigenvalue:e})")]
    NotConvex { min_eigenvalue: f64 },

    #[error(
        "rate threshold {r_th:e} is not achievable (best achievable rate {achievable:e})"
    )]
    Infeasible { r_th: f64, achievable: f64 },

    #[error("no strictly feasible point: constraint {constraint} stays at {value:e}")]
    NoInteriorPoint { constraint: usize, value: f64 },

    #[error("problem too large for enumeration: {n} antennas exceeds limit {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
