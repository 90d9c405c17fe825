use thiserror::Error;

/// Errors produced by model construction and inference.
#[derive(Debug, Error)]
pub enum DppError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A kernel diagonal entry is zero, so the item cannot be normalized.
    #[error("degenerate item {index}: zero diagonal entry")]
    DegenerateItem { index: usize },

    /// The marginal kernel has an eigenvalue at (or above) 1; the empty set
    /// has probability zero and no L-ensemble exists.
    #[error("marginal kernel has eigenvalue {eigenvalue} >= 1; the DPP is not an L-ensemble")]
    NotAnLEnsemble { eigenvalue: f64 },

    #[error("conditioning event has probability zero")]
    ZeroProbabilityCondition,

    #[error("subset has cardinality {got}, model requires {expected}")]
    CardinalityMismatch { expected: usize, got: usize },

    /// e_k of the spectrum vanishes: no size-k subset has positive mass.
    #[error("no feasible subset of cardinality {k}")]
    InfeasibleCardinality { k: usize },

    #[error("retry budget exhausted: no sample fell inside the length window")]
    InfeasibleWindow,

    #[error("unsupported factor graph topology: {0}")]
    UnsupportedTopology(String),

    /// The structured model assigns zero total mass.
    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("internal degeneracy: {0}")]
    InternalDegeneracy(String),

    #[error("optimization diverged: {0}")]
    Diverged(String),

    #[error("problem too large to enumerate: {0}")]
    UnsupportedScale(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("invalid model document: {0}")]
    Document(String),
}

pub type Result<T> = std::result::Result<T, DppError>;
