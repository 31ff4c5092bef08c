use thiserror::Error;

/// Errors raised across graph construction, operator assembly, transforms and training.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("invalid k = {k} for {n} points (need 1 <= k < n)")]
    InvalidK { k: usize, n: usize },

    #[error("points {first} and {second} coincide; nearest-neighbour distances are ambiguous")]
    DuplicatePoints { first: usize, second: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("non-finite numeric input: {0}")]
    NumericInput(String),

    #[error("matrix is not unitary: defect {defect:.3e} exceeds tolerance {tol:.3e}")]
    NotUnitary { defect: f64, tol: f64 },

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("operator construction failed: {0}")]
    Construction(String),

    /// The coupling operator has an eigenphase too close to ±π for the principal logarithm.
    #[error(
        "principal-logarithm assumption violated: eigenphase {index} = {phase:.12} leaves margin {margin:.3e} <= {tol:.3e}"
    )]
    AssumptionViolated {
        margin: f64,
        index: usize,
        phase: f64,
        tol: f64,
    },

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("order/family mismatch: {0}")]
    OrderArity(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training failed at epoch {epoch} (beta = {beta}): {source}")]
    Training {
        epoch: usize,
        beta: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("every lambda grid point failed: {0}")]
    GridExhausted(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True when the root cause is a principal-logarithm (margin) violation.
    pub fn is_assumption_violation(&self) -> bool {
        match self {
            Error::AssumptionViolated { .. } => true,
            Error::Training { source, .. } => source.is_assumption_violation(),
            _ => false,
        }
    }

    pub(crate) fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
