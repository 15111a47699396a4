use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("hole radius {radius} is not below half the cell size {epsilon}/2; largest admissible epsilon for beta={beta} is {max_epsilon}")]
    CriticalRadiusTooLarge {
        epsilon: f64,
        beta: f64,
        radius: f64,
        max_epsilon: f64,
    },
    #[error("cell size {epsilon} does not divide the side length {side}")]
    NonAlignedLattice { epsilon: f64, side: f64 },
    #[error("degenerate annulus: inner radius {inner} must be below outer radius {outer}")]
    DegenerateAnnulus { inner: f64, outer: f64 },
    #[error("degenerate torus cell: hole radius {rho} must lie in (0, 1/2)")]
    DegenerateCell { rho: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("boundary selection is empty")]
    EmptyBoundarySelection,
    #[error("cell-problem load is incompatible: sum = {0:e}")]
    IncompatibleLoad(f64),
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("eigensolver did not converge within {iterations} iterations (worst residual {worst_residual:e})")]
    ConvergenceFailure {
        iterations: usize,
        worst_residual: f64,
    },
    #[error("invalid eigenvector: {0}")]
    InvalidEigenvector(String),
    #[error("argument outside validated range: {0}")]
    OutOfValidatedRange(String),
    #[error("root bracketing failed on [{lo}, {hi}]: {reason}")]
    RootBracketingFailure { lo: f64, hi: f64, reason: String },
    #[error("parameters outside the regime of the estimate: {0}")]
    OutOfRegime(String),
    #[error("mesh tags incompatible with problem: {0}")]
    TagMismatch(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// True for failures of a numerical solve, as opposed to rejected input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::ConvergenceFailure { .. }
                | Error::RootBracketingFailure { .. }
                | Error::IncompatibleLoad(_)
        )
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
