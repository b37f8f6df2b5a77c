use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("qubit index {index} out of range for {n} qubits")]
    QubitOutOfRange { index: usize, n: usize },

    #[error("outcome index {index} out of range (d = {d})")]
    OutcomeOutOfRange { index: usize, d: usize },

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("system of {n} qubits exceeds the dense limit of {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("group of {size} qubits exceeds the cap of {cap}")]
    GroupTooLarge { size: usize, cap: usize },

    #[error("frame operator is singular or ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),

    #[error("duality check failed: residual {0:.3e}")]
    DualityViolated(f64),

    #[error("non-positive frame weight {value} at outcome {index}")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("zero-norm collapse while sampling shot {0}")]
    ZeroNormCollapse(usize),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("{what} count {count} exceeds the cap of {cap}")]
    CapExceeded {
        what: &'static str,
        count: usize,
        cap: usize,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
