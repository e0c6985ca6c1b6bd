//! Sparse storage and linear solvers.

mod direct;
mod iterative;
mod sparse;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use direct::{reverse_cuthill_mckee, solve_lu, BandedLu};
pub use iterative::{solve_cg, solve_gmres};
pub use sparse::{dot, norm2, residual, CooBuilder, SparseMatrix};

/// Dense nodal values; the owner documents the dof layout.
pub type FieldVector = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("matrix is singular (zero pivot at dof {index})")]
    SingularMatrix { index: usize },
    #[error("dof {dof} out of range for size {size}")]
    DofOutOfRange { dof: usize, size: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final `‖b - A x‖ / ‖b‖`.
    pub residual: f64,
}

/// Solver choice for nonsymmetric systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Lu,
    Gmres,
}

/// Iterative solver controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterativeOptions {
    pub tol_rel: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl IterativeOptions {
    pub fn with_tol(tol_rel: f64) -> Self {
        Self {
            tol_rel,
            max_iter: 20_000,
            restart: 50,
        }
    }
}

/// GMRES first, sparse LU if GMRES stalls.
pub fn solve_nonsymmetric(
    a: &SparseMatrix,
    b: &[f64],
    guess: Option<&[f64]>,
    opts: &IterativeOptions,
) -> Result<(FieldVector, SolveStats), LinalgError> {
    match solve_gmres(a, b, guess, opts.tol_rel, opts.restart, opts.max_iter) {
        Ok(out) => Ok(out),
        Err(LinalgError::NotConverged { iterations, residual }) => {
            log::debug!("gmres stalled ({iterations} its, {residual:e}); falling back to LU");
            let x = solve_lu(a, b)?;
            let res = norm2(&sparse::residual(a, &x, b)) / norm2(b).max(f64::MIN_POSITIVE);
            Ok((
                x,
                SolveStats {
                    iterations,
                    residual: res,
                },
            ))
        }
        Err(e) => Err(e),
    }
}
