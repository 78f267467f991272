use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KanError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("basis index {index} out of range (grid has {count} basis functions)")]
    BasisIndex { index: usize, count: usize },
    #[error("derivative order {order} exceeds spline order {k}")]
    DerivativeOrder { order: usize, k: usize },
    #[error("empty sample set")]
    EmptySamples,
    #[error("sample count mismatch: {xs} inputs vs {ys} targets")]
    SampleMismatch { xs: usize, ys: usize },
    #[error("linear system is not positive definite")]
    NotPositiveDefinite,
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("stale trace: recorded at version {trace}, network is at version {network}")]
    StaleTrace { trace: u64, network: u64 },
    #[error("edge ({l},{i},{j}) does not exist")]
    NoSuchEdge { l: usize, i: usize, j: usize },
    #[error("unknown symbolic function {0:?}")]
    UnknownFunction(String),
    #[error("function {0:?} cannot be fitted on these samples")]
    Unfittable(String),
    #[error("edge ({l},{i},{j}) is not locked to a symbolic function")]
    UnlockedEdge { l: usize, i: usize, j: usize },
    #[error("pruning would remove every node of hidden layer {0}")]
    DegeneratePrune(usize),
    #[error("non-finite loss: {0}")]
    NonFinite(String),
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("malformed model document: {0}")]
    Malformed(String),
    #[error("unsupported model document version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, KanError>;
