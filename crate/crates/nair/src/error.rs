//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by matrix kernels, hierarchy setup, solvers, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not conform.
    #[error("dimension mismatch in {op}: {details}")]
    DimensionMismatch { op: &'static str, details: String },

    /// CSR arrays are structurally inconsistent.
    #[error("invalid sparse structure: {0}")]
    InvalidStructure(String),

    /// An index exceeds the dimension it addresses.
    #[error("index {index} out of range for dimension {bound}")]
    IndexOutOfRange { index: usize, bound: usize },

    /// A parameter is outside its documented range.
    #[error("invalid parameter `{name}`: {details}")]
    InvalidParameter { name: &'static str, details: String },

    /// A diagonal entry is zero or absent where one is required.
    #[error("row {row} has a zero or missing diagonal entry")]
    BadDiagonal { row: usize },

    /// A matrix expected to be unit-diagonal is not.
    #[error("row {row} diagonal is {value}, not 1 within 1e-14")]
    NonUnitDiagonal { row: usize, value: f64 },

    /// Exact singularity detected during factorization.
    #[error("matrix is singular: zero pivot at elimination step {step}")]
    Singular { step: usize },

    /// Power iteration failed to settle within its iteration budget.
    #[error("power iteration did not converge in {iters} iterations; last estimate {estimate}")]
    PowerIterationDiverged { iters: usize, estimate: f64 },

    /// The matrix graph contains a nontrivial strongly connected component.
    #[error("matrix is not triangular: strongly connected component of size {size}")]
    NotTriangular { size: usize },

    /// A velocity field produced cyclic dependencies in the discretization.
    #[error("velocity field induces {count} cyclic component(s), largest of size {largest}")]
    CyclicFlow { count: usize, largest: usize },

    /// A dense-only operation was requested above its size cap.
    #[error("dense-mode cap exceeded: n = {n} > {cap}")]
    DenseCapExceeded { n: usize, cap: usize },

    /// Residual or iterate became NaN/inf during iteration.
    #[error("non-finite residual at iteration {iteration}")]
    NonFiniteResidual { iteration: usize },

    /// The GMRES least-squares problem lost rank.
    #[error("singular GMRES least-squares system at inner step {step}")]
    SingularLeastSquares { step: usize },

    /// A file could not be parsed.
    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },

    /// Underlying I/O failure.
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Command-line usage error.
    #[error("{0}")]
    Usage(String),
}
