//! Discrete operators, grid functions and linear solvers.

mod eigen;
mod field;
mod operators;
mod solve;
mod sparse;

use std::sync::Arc;

use thiserror::Error;

use crate::domain::GridDomain;
use crate::expr::ExprError;
use crate::scalar::Real;

pub use eigen::{inverse_iteration, EigenOutcome};
pub use field::{decode_efld, ComplexField, EfldHeader, Field, FieldIoError, EFLD_MAGIC, EFLD_VERSION};
pub use operators::{
    apply_gradient, assemble_dirichlet_laplacian, assemble_robin_form, edge_gradient, BoundaryKind, Elliptic,
};
pub use solve::{conjugate_gradient, default_max_iter, gmres, CgOutcome};
pub use sparse::SparseOperator;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("no convergence after {iterations} iterations (achieved residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("operator is not positive definite (curvature {curvature:e} at iteration {iteration})")]
    NotPositiveDefinite { iteration: usize, curvature: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("breakdown: {0}")]
    Breakdown(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscreteError {
    #[error("negative Robin weight {value} at boundary face {at:?}")]
    NegativeBeta { at: Vec<f64>, value: f64 },
    #[error("Robin weight evaluation failed at {at:?}: {source}")]
    Expr {
        at: Vec<f64>,
        #[source]
        source: ExprError,
    },
}

/// Solve `A x = rhs` to relative residual `tol` by Jacobi-preconditioned CG.
pub fn solve_spd<T: Real>(a: &SparseOperator<T>, rhs: &Field<T>, tol: T) -> Result<Field<T>, SolveError> {
    let out = conjugate_gradient(a, rhs.values(), None, tol, default_max_iter(a.dim()))?;
    Ok(Field::from_values(rhs.domain(), 1, out.x))
}

/// Smallest eigenvalue of `a` (assembled on `domain`) and its eigenvector,
/// normalised to unit `h^d`-weighted norm.
pub fn smallest_eigenvalue<T: Real>(
    a: &SparseOperator<T>,
    domain: &Arc<GridDomain<T>>,
    tol: T,
) -> Result<(T, Field<T>), SolveError> {
    let out = inverse_iteration(a, tol, 10_000)?;
    let v = Field::from_values(domain, 1, out.vector);
    let norm = v.norm();
    Ok((out.lambda, v.scale(T::one() / norm)))
}
