use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid weight matrix: {0}")]
    InvalidWeights(String),

    #[error("invalid Laplacian: {0}")]
    InvalidLaplacian(String),

    #[error("invalid kernel matrix: {0}")]
    InvalidKernel(String),

    #[error("invalid sampling pattern: {0}")]
    InvalidPattern(String),

    #[error("symmetric eigensolver did not converge")]
    DecompositionFailure,

    #[error("linear solve failed: {0}")]
    SolveFailure(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("input contains missing entries (row {row}, column {column})")]
    MissingData { row: usize, column: usize },

    #[error("column {column} has zero variance")]
    ZeroVariance { column: usize },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("L_UU is singular even after ridge regularization")]
    SingularSubmatrix,

    #[error("bandwidth K={k} exceeds the number of observed nodes ({observed})")]
    BandwidthTooLarge { k: usize, observed: usize },

    #[error("no observed nodes: every node of the signal is missing")]
    AllNodesMissing,

    #[error("S + lambda*I is not positive definite")]
    NonPositiveDefinite,

    #[error("invalid cluster count {c} for {n} nodes")]
    InvalidClusterCount { c: usize, n: usize },

    #[error("cluster {cluster} has no observed nodes; its members cannot be reconstructed")]
    ClusterFullyUnobserved { cluster: usize },

    #[error("graph learning failed in cluster {cluster}: {source}")]
    ClusterLearning {
        cluster: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("every cross-validation cell failed")]
    AllCellsFailed,

    #[error("{pct}% availability leaves no observed node")]
    NoObservedNodes { pct: f64 },

    #[error("invalid target node {0}")]
    InvalidTarget(usize),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("timestamps are not strictly increasing at line {line}")]
    NonMonotonicTimestamps { line: usize },

    #[error("duplicate timestamp at line {line}")]
    DuplicateTimestamp { line: usize },

    #[error("duplicate node id {0:?}")]
    DuplicateNodeId(String),

    #[error("no complete rows")]
    NoCompleteRows,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
