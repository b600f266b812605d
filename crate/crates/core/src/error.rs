use thiserror::Error;

/// Errors raised by the hierarchical minimization toolkit.
///
/// Variants fall into two families: input problems (malformed problems,
/// dimension mismatches, points outside the domain) and refusals, where a
/// hypothesis the method relies on does not hold for the given function.
/// [`Error::is_refusal`] separates the two.
#[derive(Debug, Error)]
pub enum Error {
    #[error("merit function needs at least one residual")]
    EmptyResiduals,

    #[error("dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite parameter value at coordinate {0}")]
    NonFiniteParameter(usize),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("invalid domain box: {0}")]
    InvalidDomain(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("partially linear model has {samples} samples but {basis} basis functions")]
    TooFewSamples { samples: usize, basis: usize },

    #[error("point {point:?} lies outside the domain box")]
    OutOfBox { point: Vec<f64> },

    #[error("non-finite Hessian entry at ({row}, {col})")]
    NonFiniteHessian { row: usize, col: usize },

    #[error("non-finite gradient entry at coordinate {0}")]
    NonFiniteGradient(usize),

    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("empty or non-square matrix")]
    BadMatrix,

    #[error("design matrix is rank deficient: numerical rank {rank} of {columns} columns")]
    RankDeficient { rank: usize, columns: usize },

    #[error("F''_yy is not positive definite at {witness:?} (min eigenvalue {min_eig:e})")]
    NotConvexInY { witness: Vec<f64>, min_eig: f64 },

    #[error(
        "F is not strictly convex on the box: Hessian min eigenvalue {min_eig:e} at {witness:?}"
    )]
    NotStrictlyConvex { witness: Vec<f64>, min_eig: f64 },

    #[error("no convergence within {iterations} iterations (best {best:?}, gradient norm {grad_norm:e})")]
    MaxIterations {
        iterations: usize,
        best: Vec<f64>,
        grad_norm: f64,
    },

    #[error("line search failed at {point:?} (gradient norm {grad_norm:e})")]
    LineSearchFailed { point: Vec<f64>, grad_norm: f64 },

    #[error("sub-minimum certificate failed: gradient norm {grad_norm:e} above tolerance {tol:e}")]
    CertificateFailed { grad_norm: f64, tol: f64 },

    #[error("slice solve failed at x = {x:?}: {source}")]
    SliceFailed {
        x: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("need at least 3 strictly increasing grid points")]
    BadGrid,

    #[error("minimum at grid boundary (abscissa {at})")]
    BoundaryMinimum { at: f64 },

    #[error("function is flat over the grid")]
    FlatSection,

    #[error("bracket invariant violated: f(b) must be below f(a) and f(c)")]
    InvalidBracket,

    #[error("non-finite function value at {at}")]
    NonFiniteValue { at: f64 },

    #[error("level {level} is below the section minimum {minimum}")]
    LevelBelowMinimum { level: f64, minimum: f64 },

    #[error("section has {0} local minima; sub-level intervals need exactly one")]
    NotUnimodal(usize),

    #[error("sub-level set at level {level} reaches the end of the section grid")]
    LevelBeyondGrid { level: f64 },

    #[error("degenerate critical points present: {0:?}")]
    DegenerateCriticalPoints(Vec<Vec<f64>>),

    #[error("gradient norm {grad_norm:e} at the minimizer exceeds outer tolerance {outer_tol:e}")]
    OuterToleranceNotMet { grad_norm: f64, outer_tol: f64 },

    #[error("conditional minimizer {point:?} sits on the box boundary in coordinates {bounds:?}, so F'_y = 0 fails there")]
    ConstrainedSlice { point: Vec<f64>, bounds: Vec<usize> },

    #[error("{0}")]
    Config(String),
}

impl Error {
    /// True when the error reports a violated theoretical precondition rather than bad input.
    pub fn is_refusal(&self) -> bool {
        match self {
            Error::NotConvexInY { .. }
            | Error::NotStrictlyConvex { .. }
            | Error::DegenerateCriticalPoints(_)
            | Error::NotUnimodal(_)
            | Error::BoundaryMinimum { .. }
            | Error::FlatSection
            | Error::RankDeficient { .. }
            | Error::MaxIterations { .. }
            | Error::LineSearchFailed { .. }
            | Error::CertificateFailed { .. }
            | Error::OuterToleranceNotMet { .. }
            | Error::LevelBeyondGrid { .. }
            | Error::ConstrainedSlice { .. } => true,
            Error::SliceFailed { source, .. } => source.is_refusal(),
            _ => false,
        }
    }

    /// The witness point carried by a convexity refusal, if any.
    pub fn witness(&self) -> Option<&[f64]> {
        match self {
            Error::NotConvexInY { witness, .. } | Error::NotStrictlyConvex { witness, .. } => {
                Some(witness)
            }
            Error::SliceFailed { source, .. } => source.witness(),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
