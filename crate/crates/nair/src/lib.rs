//! Reduction-based algebraic multigrid for sparse, highly nonsymmetric
//! linear systems with (near-)triangular structure.
//!
//! The solver approximates the ideal restriction operator
//! `R_ideal = [-A_cf A_ff^{-1}  I]` by a truncated Neumann series taken over
//! strong connections of the fine-fine block, pairs it with one-point
//! interpolation and Jacobi F-relaxation, and drives the resulting
//! Petrov-Galerkin hierarchy as a stationary solver or as a V-cycle
//! preconditioner for restarted GMRES. A diagnostics layer materializes the
//! small dense quantities (`delta_F`, `delta_R`, `delta_P`, the `G` matrix
//! and its multilevel analogue) that govern convergence, so the reduction
//! framework can be verified numerically at desk scale.
//!
//! Entry points:
//! - [`problems`] generates upwind transport test systems (1D/2D/3D) and
//!   seeded random triangular matrices.
//! - [`hierarchy::setup`] builds the multilevel hierarchy from any CSR
//!   matrix with a nonzero diagonal.
//! - [`solvers::solve`] and [`solvers::gmres`] run stationary cycles and
//!   preconditioned Krylov iterations, returning a [`solvers::ConvergenceReport`].
//! - [`diagnostics`] computes the convergence-framework quantities.
//!
//! The `examples/` directory contains one runnable example per capability;
//! the `nair` binary wraps the same functionality behind `generate`,
//! `solve`, `diagnose`, and `bench` subcommands.

pub mod cli;
pub mod dense;
pub mod diagnostics;
pub mod error;
pub mod graph;
pub mod hierarchy;
pub mod io;
pub mod problems;
pub mod solvers;
pub mod sparse;
pub mod transfer;

pub use dense::DenseMatrix;
pub use error::Error;
pub use graph::{CfSplitting, SccDecomposition, StrengthGraph};
pub use sparse::{IndexSet, SparseMatrix};

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
