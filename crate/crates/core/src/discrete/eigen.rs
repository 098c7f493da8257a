use crate::scalar::Real;

use super::field::dot;
use super::solve::{cg_core, default_max_iter};
use super::sparse::SparseOperator;
use super::SolveError;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenOutcome<T> {
    /// Rayleigh quotient of the unshifted operator.
    pub lambda: T,
    /// Unit vector in the plain Euclidean norm, nonnegative mean.
    pub vector: Vec<T>,
    pub iterations: usize,
}

/// Smallest eigenvalue of a symmetric positive semidefinite operator by
/// shifted inverse iteration.
///
/// The shift `√ε_mach · min diag` keeps the inner solves definite when `A`
/// has a kernel; it does not affect the returned Rayleigh quotient. Stops once
/// successive quotients differ by at most `tol·λ`.
pub fn inverse_iteration<T: Real>(a: &SparseOperator<T>, tol: T, max_iter: usize) -> Result<EigenOutcome<T>, SolveError> {
    let n = a.dim();
    let diag = a.diagonal();
    let max_diag = diag.iter().copied().fold(T::zero(), T::max);
    let min_diag = diag.iter().copied().filter(|&d| d > T::zero()).fold(max_diag, T::min);
    let shift = T::epsilon().sqrt() * min_diag;
    let shifted = a.shifted(shift);
    let inner_tol = (T::epsilon() * T::lit(400.0)).max(tol * T::lit(1e-3));
    let floor = T::epsilon() * max_diag;

    let mut v = vec![T::one() / T::from_usize_lossy(n).sqrt(); n];
    let mut lambda = rayleigh(a, &v);
    for it in 1..=max_iter {
        // The shifted operator can be badly conditioned; a partially
        // converged inner solve is still a valid inverse-iteration step.
        let (inner, converged) = cg_core(&shifted, &v, Some(&v), inner_tol, default_max_iter(n))?;
        if !converged && inner.relative_residual > T::lit(1e-4) {
            return Err(SolveError::MaxIterations {
                iterations: inner.iterations,
                residual: inner.relative_residual.as_f64(),
            });
        }
        let w = inner.x;
        let norm = dot(&w, &w).sqrt();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(SolveError::Breakdown("inverse iteration produced a degenerate iterate".into()));
        }
        v = w.into_iter().map(|x| x / norm).collect();
        let next = rayleigh(a, &v);
        let done = (next - lambda).abs() <= tol * next.abs().max(floor);
        lambda = next;
        if done && it >= 3 {
            if v.iter().copied().sum::<T>() < T::zero() {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            return Ok(EigenOutcome {
                lambda: lambda.max(T::zero()),
                vector: v,
                iterations: it,
            });
        }
    }
    Err(SolveError::MaxIterations {
        iterations: max_iter,
        residual: lambda.as_f64(),
    })
}

fn rayleigh<T: Real>(a: &SparseOperator<T>, v: &[T]) -> T {
    dot(&a.apply(v), v) / dot(v, v)
}
