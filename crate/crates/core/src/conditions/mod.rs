//! Explicit constants of the existence theory and sampled falsifiers for the
//! structural conditions on the semilinearity.

mod falsify;

use std::collections::HashMap;

use thiserror::Error;

use crate::domain::GridDomain;
use crate::expr::{Expr, ExprError, Point, Var};
use crate::scalar::Real;

pub use falsify::{falsify_condition, gamma_ratio_sup, log_grid, ConditionKind, FalsifyOptions, Verdict, Witness};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConditionError {
    #[error("gradient coupling L = {l} is not below L_max = {lmax}")]
    Threshold { l: f64, lmax: f64 },
    #[error("q = {q} equals d_hat/2 = {}, which is excluded", d_hat / 2.0)]
    CriticalExponent { q: f64, d_hat: f64 },
    #[error("Moser sequence needs q > d_hat/2 (q = {q}, d_hat = {d_hat})")]
    MoserRange { q: f64, d_hat: f64 },
    #[error("invalid semilinearity: {0}")]
    Invalid(String),
    #[error("{condition} sample at x = {x:?}, s = {s}: {source}")]
    Eval {
        condition: ConditionKind,
        x: Vec<f64>,
        s: f64,
        #[source]
        source: ExprError,
    },
}

/// `L_max(ε, λ₁)`: `ε/√λ₁` if `ε ≤ 2λ₁`, otherwise `2√(ε − λ₁)`.
pub fn lmax<T: Real>(epsilon: T, lambda1: T) -> T {
    let two = T::lit(2.0);
    if lambda1 > T::zero() && epsilon <= two * lambda1 {
        epsilon / lambda1.sqrt()
    } else {
        two * (epsilon - lambda1).sqrt()
    }
}

/// `q** = q·d̂/(d̂ − 2q)` for `q < d̂/2`, infinite for `q > d̂/2`.
pub fn q_double_star<T: Real>(q: T, d_hat: T) -> Result<T, ConditionError> {
    let gap = d_hat - T::lit(2.0) * q;
    if gap == T::zero() {
        return Err(ConditionError::CriticalExponent {
            q: q.as_f64(),
            d_hat: d_hat.as_f64(),
        });
    }
    Ok(if gap > T::zero() { q * d_hat / gap } else { T::infinity() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSplit<T> {
    pub eps1: T,
    pub eps2: T,
    pub delta1: T,
}

/// `ε₁ = min{ε/2, λ₁}`, `ε₂ = ε − ε₁`, `δ₁ = ε₁/λ₁` (1 when `λ₁ = 0`).
pub fn epsilon_split<T: Real>(epsilon: T, lambda1: T) -> EpsilonSplit<T> {
    let eps1 = (epsilon / T::lit(2.0)).min(lambda1);
    let delta1 = if lambda1 > T::zero() { eps1 / lambda1 } else { T::one() };
    EpsilonSplit {
        eps1,
        eps2: epsilon - eps1,
        delta1,
    }
}

/// Constants of the `H¹` a priori bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct H1Constant<T> {
    /// `‖u‖_{L₂(ω)} ≤ ρ₀‖h‖₂`.
    pub rho0: T,
    /// `‖∇u‖₂ ≤ grad·‖h‖₂`.
    pub grad: T,
    /// `‖u‖₂ ≤ l2·‖h‖₂` on the whole domain.
    pub l2: T,
    /// `‖u‖_{H¹} ≤ C‖h‖₂`.
    pub c: T,
}

/// `ρ₀ = 4δ₁/(4δ₁ε₂ − L²)` and the `H¹` constant `C`.
///
/// Testing the truncated equation with `u` gives
/// `‖∇u‖² ≤ (λ₁−ε)₊‖u‖²_ω + L‖∇u‖‖u‖_ω + ‖h‖‖u‖_ω`; with `‖u‖_ω ≤ ρ₀‖h‖`
/// this is a quadratic inequality in `‖∇u‖` whose positive root is `grad`.
/// The full `L₂` norm follows from the Poincaré inequality when `λ₁ > 0`, and
/// from the `μ‖u‖²` term with `μ ≥ ε − λ₁` otherwise; the smaller bound is used.
pub fn h1_constant<T: Real>(lambda1: T, epsilon: T, l: T) -> Result<H1Constant<T>, ConditionError> {
    let l_max = lmax(epsilon, lambda1);
    if !(l >= T::zero() && l < l_max) {
        return Err(ConditionError::Threshold {
            l: l.as_f64(),
            lmax: l_max.as_f64(),
        });
    }
    let split = epsilon_split(epsilon, lambda1);
    let four_d = T::lit(4.0) * split.delta1;
    let rho0 = four_d / (four_d * split.eps2 - l * l);
    let excess = (lambda1 - epsilon).max(T::zero());
    let lr = l * rho0;
    let grad = (lr + (lr * lr + T::lit(4.0) * (rho0 + excess * rho0 * rho0)).sqrt()) / T::lit(2.0);
    let mut l2 = T::infinity();
    if lambda1 > T::zero() {
        l2 = l2.min(grad / lambda1.sqrt());
    }
    let mu_min = epsilon - lambda1;
    if mu_min > T::zero() {
        l2 = l2.min((rho0 * rho0 + (lr * grad + rho0) / mu_min).sqrt());
    }
    Ok(H1Constant {
        rho0,
        grad,
        l2,
        c: (grad * grad + l2 * l2).sqrt(),
    })
}

/// Exponents of the Moser iteration for `q > d̂/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MoserParams<T> {
    pub two_star: T,
    pub q_prime: T,
    pub chi: T,
    pub theta: T,
    /// `β₀ … β₃₉`.
    pub beta: Vec<T>,
    pub qss: T,
}

/// Number of `β_n` returned by [`moser_params`].
pub const MOSER_TERMS: usize = 40;

/// Sobolev exponent `2* = 2d̂/(d̂ − 2)`; for `d̂ ≤ 2` the fixed value 6.
pub fn sobolev_exponent<T: Real>(d_hat: T) -> T {
    let two = T::lit(2.0);
    if d_hat > two {
        two * d_hat / (d_hat - two)
    } else {
        T::lit(6.0)
    }
}

pub fn moser_params<T: Real>(q: T, d_hat: T) -> Result<MoserParams<T>, ConditionError> {
    let qss = q_double_star(q, d_hat)?;
    if qss.is_finite() {
        return Err(ConditionError::MoserRange {
            q: q.as_f64(),
            d_hat: d_hat.as_f64(),
        });
    }
    let two = T::lit(2.0);
    let q_prime = q / (q - T::one());
    // For d̂ ≤ 2 every finite exponent embeds; take one with χ ≥ 2.
    let two_star = if d_hat > two {
        sobolev_exponent(d_hat)
    } else {
        sobolev_exponent(d_hat).max(T::lit(4.0) * q_prime)
    };
    let chi = two_star / (two * q_prime);
    let theta = (two * chi - two) / (two * chi - T::one());
    let mut beta = Vec::with_capacity(MOSER_TERMS);
    beta.push(T::one());
    for n in 1..MOSER_TERMS {
        let prev = beta[n - 1];
        beta.push(T::lit(0.5) + chi * prev);
    }
    Ok(MoserParams {
        two_star,
        q_prime,
        chi,
        theta,
        beta,
        qss,
    })
}

/// The semilinearity `f(x, s, ξ)` with its data and structural constants.
#[derive(Debug, Clone, PartialEq)]
pub struct SemilinearitySpec<T> {
    pub f: Expr,
    pub h: Expr,
    pub h0: Expr,
    /// `γ(s)`, a function of `s` only.
    pub gamma: Expr,
    pub epsilon: T,
    pub l: T,
    pub l0: T,
    pub q: T,
    /// Effective dimension: `d` for Dirichlet problems, user supplied for Robin.
    pub d_hat: T,
}

impl<T: Real> SemilinearitySpec<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(f: Expr, h: Expr, h0: Expr, gamma: Expr, epsilon: T, l: T, l0: T, q: T, d_hat: T) -> Result<Self, ConditionError> {
        let spec = SemilinearitySpec {
            f,
            h,
            h0,
            gamma,
            epsilon,
            l,
            l0,
            q,
            d_hat,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), ConditionError> {
        let bad = |m: &str| Err(ConditionError::Invalid(m.into()));
        if !(self.epsilon > T::zero()) {
            return bad("eps must be positive");
        }
        if !(self.l >= T::zero()) {
            return bad("L must be nonnegative");
        }
        if !(self.l0 >= self.l) {
            return bad("L0 must be at least L");
        }
        if !(self.q >= T::lit(2.0)) {
            return bad("q must be at least 2");
        }
        if !(self.d_hat > T::zero()) {
            return bad("d_hat must be positive");
        }
        q_double_star(self.q, self.d_hat)?;
        let spatial = |v: &Var| matches!(v, Var::X(_) | Var::Param(_));
        if !self.h.uses_only(spatial) {
            return bad("h may depend on x only");
        }
        if !self.h0.uses_only(spatial) {
            return bad("h0 may depend on x only");
        }
        if !self.gamma.uses_only(|v| matches!(v, Var::S | Var::Param(_))) {
            return bad("gamma may depend on s only");
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    /// Substitute `lambda1`, `eps` and `Lmax` in every expression.
    pub fn bind_params(&self, lambda1: T) -> Self {
        let params = param_map(lambda1, self.epsilon);
        SemilinearitySpec {
            f: self.f.bind(&params),
            h: self.h.bind(&params),
            h0: self.h0.bind(&params),
            gamma: self.gamma.bind(&params),
            ..self.clone()
        }
    }

    /// Check `h ≥ 0` and `h₀ ≥ 0` at every node; returns the first offender.
    pub fn check_data_sign(&self, dom: &GridDomain<T>, lambda1: T) -> Result<Option<(Vec<f64>, &'static str, f64)>, ConditionError> {
        let bound = self.bind_params(lambda1);
        for node in 0..dom.len() {
            let x = dom.coords(node);
            for (name, e) in [("h", &bound.h), ("h0", &bound.h0)] {
                let v = e.eval(&Point::at(x, T::zero())).map_err(|source| ConditionError::Eval {
                    condition: ConditionKind::Coercive,
                    x: x.iter().map(|v| v.as_f64()).collect(),
                    s: 0.0,
                    source,
                })?;
                if v < T::zero() {
                    return Ok(Some((x.iter().map(|v| v.as_f64()).collect(), name, v.as_f64())));
                }
            }
        }
        Ok(None)
    }
}

/// Values of the reserved parameter names for given `λ₁` and `ε`.
pub fn param_map<T: Real>(lambda1: T, epsilon: T) -> HashMap<String, f64> {
    HashMap::from([
        ("lambda1".to_string(), lambda1.as_f64()),
        ("eps".to_string(), epsilon.as_f64()),
        ("Lmax".to_string(), lmax(epsilon, lambda1).as_f64()),
    ])
}
