use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("invalid M: {0}")]
    InvalidM(String),

    #[error("resolvent {index} receives no coupling (S[{index},{index}] = {value:e})")]
    DegenerateRow { index: usize, value: f64 },

    #[error("matrices are not a causal pair: {0}")]
    NotCausal(String),

    #[error("matrix is not representable as P P^T: smallest eigenvalue {min_eigenvalue:e}")]
    NotRepresentable { min_eigenvalue: f64 },

    #[error("laplacian factorization failed: {0}")]
    Laplacian(String),

    #[error("step size violation: (4 - beta*gamma)/2 = {bound} < theta_bar = {theta_bar}")]
    StepSize { bound: f64, theta_bar: f64 },

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{kind} oracle {index} returned a non-finite value")]
    Oracle { kind: OracleKind, index: usize },

    #[error("invalid initialization: {0}")]
    Initialization(String),

    #[error("iteration diverged at k = {iteration}: residual {residual:e} exceeds {limit:e}")]
    Divergence {
        iteration: usize,
        residual: f64,
        limit: f64,
    },

    #[error("data ingestion failed at row {row}, column {column}: {message}")]
    Ingestion {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    Resolvent,
    Forward,
}

impl std::fmt::Display for OracleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OracleKind::Resolvent => f.write_str("resolvent"),
            OracleKind::Forward => f.write_str("forward"),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
