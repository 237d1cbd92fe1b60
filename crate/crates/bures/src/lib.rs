//! # bures
//!
//! Wasserstein barycenters of Gaussian measures.
//!
//! A centered Gaussian is identified with its covariance matrix, and the
//! 2-Wasserstein distance restricted to Gaussians induces the Bures metric on
//! positive definite matrices. This crate implements that geometry in closed
//! form and builds first-order barycenter solvers on top of it:
//!
//! - [`spd`]: dense symmetric eigendecomposition (cyclic Jacobi), matrix
//!   square roots, inverse roots, log-determinants.
//! - [`geometry`]: Gaussian measures, optimal transport maps, the squared
//!   distance, exponential/logarithmic maps, geodesics and generalized
//!   geodesics.
//! - [`solver`]: the barycenter objective and its gradient; gradient descent,
//!   stochastic gradient descent (single pass, with replacement, averaged),
//!   step-size schedules, and the fixed-point residual.
//! - [`diagnostics`]: numerical certification of the inequalities that drive
//!   the convergence analysis (Polyak-Łojasiewicz, variance, smoothness,
//!   integrated PL) plus convexity probes along generalized geodesics.
//! - [`experiments`]: synthetic datasets with a known barycenter, replicated
//!   runs with confidence bands, and log-log rate fitting.
//! - [`dataset`]: JSON dataset files, CSV traces, and the step-schedule
//!   mini-grammar shared with the `bures` command-line tool.
//!
//! ## Quick start
//!
//! ```rust
//! use bures::{BuresDistribution, GaussianMeasure, SpdMatrix};
//! use bures::solver::{fixed_point_residual, gd};
//!
//! // Two centered scalar Gaussians with variances 1 and 4.
//! let q = BuresDistribution::uniform(vec![
//!     GaussianMeasure::centered(SpdMatrix::from_diag(&[1.0])?),
//!     GaussianMeasure::centered(SpdMatrix::from_diag(&[4.0])?),
//! ])?;
//!
//! // Unit-step gradient descent lands on the fixed point ((1 + 2)/2)² = 2.25.
//! let run = gd(&q, q.atom(0), 100, 1e-12, None)?;
//! assert!(run.converged);
//! assert!((run.final_measure.cov().get(0, 0) - 2.25).abs() < 1e-10);
//! assert!(fixed_point_residual(&q, &run.final_measure)? < 1e-6);
//! # Ok::<(), bures::Error>(())
//! ```
//!
//! All values are immutable after construction and all operations are pure
//! functions of their inputs, so everything is safe to share across threads.

use thiserror::Error;

pub mod dataset;
pub mod diagnostics;
pub mod experiments;
pub mod geometry;
pub mod rng;
pub mod schedule;
pub mod solver;
pub mod spd;

pub use geometry::{BuresDistribution, GaussianMeasure, TangentMap, TransportMap};
pub use schedule::StepSchedule;
pub use solver::{SolverResult, SolverTrace, TraceRecord};
pub use spd::{EigenDecomposition, Matrix, SpdMatrix};

/// Error variants shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// The iterative eigensolver failed to reach tolerance in its sweep budget.
    #[error(
        "eigensolver did not converge within {sweeps} sweeps (off-diagonal norm {off_norm:e})"
    )]
    NonConvergence { sweeps: usize, off_norm: f64 },

    /// Matrix has an eigenvalue below the negative semidefiniteness tolerance.
    #[error("matrix is not positive semidefinite: min eigenvalue {min_eig:e} < -{tol:e}")]
    NotPsd { min_eig: f64, tol: f64 },

    /// Matrix is numerically singular where strict positive definiteness is required.
    #[error("matrix is numerically singular: min eigenvalue {min_eig:e} below floor {floor:e}")]
    SingularMatrix { min_eig: f64, floor: f64 },

    /// Operands have incompatible dimensions.
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    /// `I + V` is not positive semidefinite, so the tangent vector cannot be exponentiated.
    #[error("tangent vector is not exp-admissible: min eigenvalue of I + V is {min_eig:e}")]
    ExpNotAdmissible { min_eig: f64 },

    /// A finite step-size sequence ran out before the sample stream did.
    #[error("step schedule exhausted: {available} steps available, {needed} needed")]
    ScheduleExhausted { needed: usize, available: usize },

    /// A step-size schedule violates its own invariants.
    #[error("invalid step schedule: {0}")]
    InvalidSchedule(String),

    /// A measure lies outside the regular set required by a diagnostic check.
    #[error("measure is not {zeta}-regular: {detail}")]
    NotRegular { zeta: f64, detail: String },

    /// A rate fit was requested on a window that cannot support one.
    #[error("degenerate rate fit: {0}")]
    DegenerateFit(String),

    /// Invalid argument or malformed input data.
    #[error("{0}")]
    InvalidInput(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed JSON in a dataset, measure, or config file.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
