use std::fmt;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Why a located stationary point was not accepted as a boundary point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NotParetoReason {
    /// The boundary LP found an improving direction at the solved state.
    ImprovingDirectionExists,
    /// `z·p` is not concave in the voltages, so the stationary point is a
    /// saddle and `z·p` has no maximizer.
    IndefiniteObjective,
}

impl fmt::Display for NotParetoReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NotParetoReason::ImprovingDirectionExists => {
                write!(f, "an improving load direction exists at the solved state")
            }
            NotParetoReason::IndefiniteObjective => {
                write!(f, "weighted load objective is not concave (saddle point)")
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed case (line {line}, column {column}): {message}")]
    MalformedCase {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("power flow did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("degenerate {kind} circle at bus {bus}: the locus is a line")]
    DegenerateCircle { bus: usize, kind: &'static str },

    #[error("circles do not intersect")]
    Disjoint,

    #[error("LP solver failure: {0}")]
    SolverFailure(String),

    #[error("stationarity system is singular (null space dimension {null_dim})")]
    SingularSystem { null_dim: usize },

    #[error("located point is not a boundary point: {reason}")]
    NotPareto { reason: NotParetoReason },

    #[error("grid has {points} points, above the limit of {limit}")]
    GridTooLarge { points: u64, limit: u64 },

    #[error("network matrix is singular: {0}")]
    SingularNetwork(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn malformed(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::MalformedCase {
            line,
            column,
            message: message.into(),
        }
    }
}
