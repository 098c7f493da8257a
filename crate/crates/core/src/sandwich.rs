//! The gradient-linear problems `-Δv = (λ₁−ε)v ± L|∇v| ± h` solved by
//! Banach iteration in the weighted norm `(δ₁·E(w) + ε′‖w‖²)^{1/2}`.

use thiserror::Error;

use crate::conditions::{epsilon_split, lmax, ConditionError};
use crate::discrete::{conjugate_gradient, default_max_iter, Elliptic, Field, SolveError, SparseOperator};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `v↓ ≤ 0`: data `-L|∇v| - h`.
    Lower,
    /// `v↑ ≥ 0`: data `+L|∇v| + h`.
    Upper,
}

impl Side {
    fn sign<T: Real>(self) -> T {
        match self {
            Side::Lower => -T::one(),
            Side::Upper => T::one(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SandwichError {
    #[error(transparent)]
    Threshold(#[from] ConditionError),
    #[error("linear solve failed: {0}")]
    Solve(#[from] SolveError),
    #[error("contraction ratio {ratio} exceeds sqrt(alpha) = {bound} at iteration {iteration}")]
    ContractionBreach { iteration: usize, ratio: f64, bound: f64 },
    #[error("no convergence after {iterations} iterations (last update {update:e})")]
    NoConvergence { iterations: usize, update: f64 },
    #[error("sign violated: value {value} at node {node}")]
    Sign { node: usize, value: f64 },
    #[error("data h must be nonnegative (value {value} at node {node})")]
    NegativeData { node: usize, value: f64 },
}

#[derive(Debug, Clone)]
pub struct SandwichResult<T> {
    pub v: Field<T>,
    pub iterations: usize,
    /// `N(v_{n+1} − v_n)/N(v_n − v_{n−1})`, recorded while the increments
    /// are above round-off level.
    pub contraction_ratios: Vec<T>,
    pub update_norms: Vec<T>,
    pub alpha: T,
    pub delta1: T,
    pub eps_prime: T,
}

impl<T: Real> SandwichResult<T> {
    pub fn max_ratio(&self) -> T {
        self.contraction_ratios.iter().copied().fold(T::zero(), T::max)
    }
}

#[derive(Debug, Clone)]
pub struct SandwichOptions<T> {
    pub max_iter: usize,
    /// Initial iterate (zero if `None`).
    pub start: Option<Field<T>>,
}

impl<T> Default for SandwichOptions<T> {
    fn default() -> Self {
        SandwichOptions {
            max_iter: 20_000,
            start: None,
        }
    }
}

/// Weighted norm `(δ₁·E(w) + ε′‖w‖²)^{1/2}` of the contraction argument.
pub fn weighted_norm<T: Real>(op: &Elliptic<T>, w: &Field<T>, delta1: T, eps_prime: T) -> T {
    (delta1 * op.energy(w) + eps_prime * w.inner(w)).sqrt()
}

/// Contraction parameters `(α, δ₁, ε′)` with `α = (1 + (L/L_max)²)/2`.
pub fn contraction_parameters<T: Real>(lambda1: T, epsilon: T, l: T) -> Result<(T, T, T), ConditionError> {
    let l_max = lmax(epsilon, lambda1);
    if !(l >= T::zero() && l < l_max) {
        return Err(ConditionError::Threshold {
            l: l.as_f64(),
            lmax: l_max.as_f64(),
        });
    }
    let split = epsilon_split(epsilon, lambda1);
    let ratio = l / l_max;
    let alpha = (T::one() + ratio * ratio) / T::lit(2.0);
    let eps_prime = split.eps2 - l * l / (T::lit(4.0) * alpha * split.delta1);
    Ok((alpha, split.delta1, eps_prime))
}

pub fn solve_linear_gradient<T: Real>(
    op: &Elliptic<T>,
    side: Side,
    lambda1: T,
    epsilon: T,
    l: T,
    h: &Field<T>,
    tol: T,
) -> Result<SandwichResult<T>, SandwichError> {
    solve_linear_gradient_with(op, side, lambda1, epsilon, l, h, tol, &SandwichOptions::default())
}

/// Iterate `v_{n+1} = A⁻¹(±L|∇v_n| ± h)` with `A = Lap − (λ₁ − ε)`.
///
/// Increments are computed as `A⁻¹(S v_n − S v_{n−1})` so that their size is
/// resolved relative to themselves. The loop stops once the weighted update
/// is at most `(1 − √α)·tol`, which bounds the distance to the fixed point by
/// `tol`.
#[allow(clippy::too_many_arguments)]
pub fn solve_linear_gradient_with<T: Real>(
    op: &Elliptic<T>,
    side: Side,
    lambda1: T,
    epsilon: T,
    l: T,
    h: &Field<T>,
    tol: T,
    opts: &SandwichOptions<T>,
) -> Result<SandwichResult<T>, SandwichError> {
    let (alpha, delta1, eps_prime) = contraction_parameters(lambda1, epsilon, l)?;
    if let Some((node, &value)) = h.values().iter().enumerate().find(|(_, &v)| v < T::zero()) {
        return Err(SandwichError::NegativeData {
            node,
            value: value.as_f64(),
        });
    }
    let a = shifted_operator(op, lambda1, epsilon);
    let inner_tol = (T::epsilon() * T::lit(100.0)).max(T::lit(1e-13));
    let solve = |rhs: &[T]| -> Result<Vec<T>, SolveError> {
        Ok(conjugate_gradient(&a, rhs, None, inner_tol, default_max_iter(a.dim()))?.x)
    };
    let sign: T = side.sign();
    let map = |v: &Field<T>| -> Vec<T> {
        let g = op.gradient(v).pointwise_norm();
        g.values()
            .iter()
            .zip(h.values())
            .map(|(&gn, &hv)| sign * (l * gn + hv))
            .collect()
    };
    let sqrt_alpha = alpha.sqrt();
    let stop = (T::one() - sqrt_alpha) * tol;
    let floor = T::lit(1e3) * inner_tol;
    let dom = op.domain();

    let v0 = opts.start.clone().unwrap_or_else(|| Field::zeros(dom));
    let mut s_prev = map(&v0);
    let mut v = Field::from_values(dom, 1, solve(&s_prev)?);
    let mut d = v.sub(&v0);
    let mut d_norm = weighted_norm(op, &d, delta1, eps_prime);
    let mut ratios = Vec::new();
    let mut updates = vec![d_norm];
    let mut iterations = 1;
    while d_norm > stop {
        if iterations >= opts.max_iter {
            return Err(SandwichError::NoConvergence {
                iterations,
                update: d_norm.as_f64(),
            });
        }
        let s_next = map(&v);
        let diff: Vec<T> = s_next.iter().zip(&s_prev).map(|(&a, &b)| a - b).collect();
        s_prev = s_next;
        d = Field::from_values(dom, 1, solve(&diff)?);
        v = v.add(&d);
        let next = weighted_norm(op, &d, delta1, eps_prime);
        iterations += 1;
        if d_norm > floor * weighted_norm(op, &v, delta1, eps_prime) {
            let ratio = next / d_norm;
            if ratio > sqrt_alpha + T::lit(1e-6) {
                return Err(SandwichError::ContractionBreach {
                    iteration: iterations,
                    ratio: ratio.as_f64(),
                    bound: sqrt_alpha.as_f64(),
                });
            }
            ratios.push(ratio);
        }
        d_norm = next;
        updates.push(d_norm);
    }

    let sign_tol = T::lit(1e-10).max(T::epsilon() * T::lit(100.0)) * v.max_abs().max(T::one());
    let bad = v.values().iter().enumerate().find(|(_, &x)| sign * x < -sign_tol);
    if let Some((node, &value)) = bad {
        return Err(SandwichError::Sign {
            node,
            value: value.as_f64(),
        });
    }
    Ok(SandwichResult {
        v,
        iterations,
        contraction_ratios: ratios,
        update_norms: updates,
        alpha,
        delta1,
        eps_prime,
    })
}

/// `Lap − (λ₁ − ε)` on the unknowns of `op`.
pub fn shifted_operator<T: Real>(op: &Elliptic<T>, lambda1: T, epsilon: T) -> SparseOperator<T> {
    op.stiffness().shifted(epsilon - lambda1)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::discrete::smallest_eigenvalue;
    use crate::domain::{build_domain, BoundingBox, DomainSpec};

    fn interval(h: f64) -> Elliptic<f64> {
        let d = build_domain(&DomainSpec::Interval { a: 0.0, b: 1.0 }, h, &BoundingBox::unit(1)).unwrap();
        Elliptic::dirichlet(Arc::new(d))
    }

    #[test]
    fn zero_data_gives_zero_in_one_step() {
        let op = interval(0.25);
        let lam = smallest_eigenvalue(op.stiffness(), op.domain(), 1e-12).unwrap().0;
        let r = solve_linear_gradient(&op, Side::Upper, lam, 1.0, 0.2, &Field::zeros(op.domain()), 1e-10).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.v.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn no_gradient_term_is_a_linear_solve() {
        let op = interval(0.25);
        let lam = smallest_eigenvalue(op.stiffness(), op.domain(), 1e-13).unwrap().0;
        let one = Field::constant(op.domain(), 1.0);
        let r = solve_linear_gradient(&op, Side::Upper, lam, lam, 0.0, &one, 1e-12).unwrap();
        for (g, w) in r.v.values().iter().zip([3.0 / 32.0, 1.0 / 8.0, 3.0 / 32.0]) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }

    #[test]
    fn threshold_is_enforced() {
        let op = interval(0.25);
        let one = Field::constant(op.domain(), 1.0);
        let lm = lmax(1.0, 9.0);
        assert!(matches!(
            solve_linear_gradient(&op, Side::Upper, 9.0, 1.0, lm, &one, 1e-8),
            Err(SandwichError::Threshold(_))
        ));
    }

    #[test]
    fn lower_is_minus_upper_and_ratios_are_bounded() {
        let op = interval(1.0 / 16.0);
        let lam = smallest_eigenvalue(op.stiffness(), op.domain(), 1e-12).unwrap().0;
        let eps = 0.5 * lam;
        let l = 0.9 * lmax(eps, lam);
        let h = Field::from_fn(op.domain(), |x| 1.0 + x[0]);
        let up = solve_linear_gradient(&op, Side::Upper, lam, eps, l, &h, 1e-11).unwrap();
        let lo = solve_linear_gradient(&op, Side::Lower, lam, eps, l, &h, 1e-11).unwrap();
        assert!(up.max_ratio() <= up.alpha.sqrt() + 1e-8);
        assert!(!up.contraction_ratios.is_empty());
        for (a, b) in up.v.values().iter().zip(lo.v.values()) {
            assert!((a + b).abs() < 1e-10);
            assert!(*a >= 0.0);
        }
    }
}
