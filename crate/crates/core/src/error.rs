use core::fmt;

use alloc::string::String;

/// Location of a grid node: spatial multi-index and time layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeLocation {
    pub spatial: [usize; 2],
    pub layer: usize,
}

impl fmt::Display for NodeLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(ix={}, iy={}, layer={})",
            self.spatial[0], self.spatial[1], self.layer
        )
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {what} at {node}")]
    NonFinite {
        what: &'static str,
        node: NodeLocation,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// `Q(r) ≤ 0`: the jet lies outside the cone where `G = log Q` is defined.
    #[error("jet outside the admissible cone (Q = {q:e})")]
    ConeViolation { q: f64 },
    #[error("{what} is inadmissible at {node} (value {value:e})")]
    InadmissibleData {
        what: &'static str,
        node: NodeLocation,
        value: f64,
    },
    #[error("ellipticity lost at {node}: admissibility margin {margin:e}")]
    EllipticityLoss { node: NodeLocation, margin: f64 },
    #[error("negative {what} at {node}: {value:e}")]
    Negative {
        what: &'static str,
        node: NodeLocation,
        value: f64,
    },
    #[error("linear solver: {0}")]
    LinearSolver(#[from] LinearSolveError),
    #[error("operation requires a flat metric")]
    NotFlat,
    #[error("first ladder rung (level {level:e}) failed: {reason}; try a larger ε₀ or bulge λ")]
    FirstRungFailed { level: f64, reason: String },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinearSolveError {
    #[error("zero pivot in column {column}")]
    SingularPivot { column: usize },
    #[error("ILU(0) breakdown: zero diagonal in row {row}")]
    IluBreakdown { row: usize },
    #[error("GMRES breakdown after {iterations} iterations")]
    Breakdown { iterations: usize },
    #[error(
        "not converged after {iterations} iterations (relative residual {relative_residual:e})"
    )]
    MaxIterations {
        iterations: usize,
        relative_residual: f64,
    },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
