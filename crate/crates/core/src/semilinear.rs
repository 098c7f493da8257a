//! The full problem `-Δu = f(x, u, ∇u)`: truncation between the sandwich
//! fields, exhaustion levels and a damped fixed-point solve on each level.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::{fmt_num, verify_domination, verify_h1_bound, AnalysisError, Check};
use crate::conditions::{
    falsify_condition, h1_constant, lmax, ConditionError, ConditionKind, FalsifyOptions, H1Constant, SemilinearitySpec,
    Verdict,
};
use crate::discrete::{
    conjugate_gradient, default_max_iter, gmres, smallest_eigenvalue, Elliptic, Field, SolveError, SparseOperator,
};
use crate::domain::{exhaustion, saturation_level, GridDomain};
use crate::expr::{Expr, ExprError, Point};
use crate::sandwich::{solve_linear_gradient, SandwichError, SandwichResult, Side};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemilinearError {
    #[error("precondition `{condition}` failed: {detail}")]
    Precondition { condition: String, detail: String },
    #[error(transparent)]
    Condition(#[from] ConditionError),
    #[error("sandwich stage: {0}")]
    Sandwich(#[from] SandwichError),
    #[error("linear solve: {0}")]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("band is empty at node {node}: v_lower = {lower} > v_upper = {upper}")]
    Ordering { node: usize, lower: f64, upper: f64 },
    #[error("evaluation of f at x = {x:?}: {source}")]
    Eval {
        x: Vec<f64>,
        #[source]
        source: ExprError,
    },
    #[error("level {level}: no convergence by Picard or Newton (last update {update:e}, residual {residual:e})")]
    NoConvergence {
        level: usize,
        update: f64,
        residual: f64,
        updates: Vec<f64>,
    },
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `σ(x, s) = max{v₀(x), min{s, v₁(x)}}`.
pub fn truncate_sigma<T: Real>(v0: &Field<T>, v1: &Field<T>, u: &Field<T>) -> Result<Field<T>, SemilinearError> {
    check_band(v0, v1)?;
    let values = u
        .values()
        .iter()
        .zip(v0.values().iter().zip(v1.values()))
        .map(|(&s, (&lo, &hi))| lo.max(s.min(hi)))
        .collect();
    Ok(Field::from_values(u.domain(), 1, values))
}

fn check_band<T: Real>(v0: &Field<T>, v1: &Field<T>) -> Result<(), SemilinearError> {
    match v0.values().iter().zip(v1.values()).position(|(&lo, &hi)| lo > hi) {
        Some(node) => Err(SemilinearError::Ordering {
            node,
            lower: v0.values()[node].as_f64(),
            upper: v1.values()[node].as_f64(),
        }),
        None => Ok(()),
    }
}

/// `f(x, s_n, ∇u(x_n))` at every node, with `s` taken from `state`.
fn nemytskii<T: Real>(op: &Elliptic<T>, f: &Expr, state: &[T], u: &Field<T>) -> Result<Vec<T>, SemilinearError> {
    let dom = op.domain();
    let grad = op.gradient(u);
    (0..dom.len())
        .map(|n| {
            let x = dom.coords(n);
            f.eval(&Point::new(x, state[n], grad.at(n))).map_err(|source| SemilinearError::Eval {
                x: x.iter().map(|v| v.as_f64()).collect(),
                source,
            })
        })
        .collect()
}

/// One exhaustion level of the truncated problem
/// `(A + μ)u = t·χ_{Ω_k}·(f(x, σ(u), ∇u) + μσ(u))` posed on all nodes.
#[derive(Debug, Clone)]
pub struct TruncatedProblem<'a, T> {
    pub op: &'a Elliptic<T>,
    pub level: Arc<GridDomain<T>>,
    /// `χ_{Ω_k}` on the nodes of `op`.
    pub chi: Vec<bool>,
    pub mu: T,
    pub v0: &'a Field<T>,
    pub v1: &'a Field<T>,
    /// `f` with parameters bound.
    pub f: &'a Expr,
}

impl<'a, T: Real> TruncatedProblem<'a, T> {
    pub fn new(
        op: &'a Elliptic<T>,
        level: Arc<GridDomain<T>>,
        mu: T,
        v0: &'a Field<T>,
        v1: &'a Field<T>,
        f: &'a Expr,
    ) -> Result<Self, SemilinearError> {
        check_band(v0, v1)?;
        let mut chi = vec![false; op.domain().len()];
        let rows = op.domain().embedding_of(&level).ok_or_else(|| SemilinearError::Precondition {
            condition: "exhaustion".into(),
            detail: "level is not a subset of the domain".into(),
        })?;
        for r in rows {
            chi[r] = true;
        }
        Ok(TruncatedProblem {
            op,
            level,
            chi,
            mu,
            v0,
            v1,
            f,
        })
    }

    /// `t·χ·b_σ(u)`.
    pub fn source(&self, u: &Field<T>, t: T) -> Result<Vec<T>, SemilinearError> {
        let sigma = truncate_sigma(self.v0, self.v1, u)?;
        let fv = nemytskii(self.op, self.f, sigma.values(), u)?;
        Ok(fv
            .iter()
            .zip(sigma.values())
            .zip(&self.chi)
            .map(|((&fx, &s), &inside)| if inside { t * (fx + self.mu * s) } else { T::zero() })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolvePath {
    Picard,
    Newton,
    Reused,
}

impl std::fmt::Display for SolvePath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolvePath::Picard => "picard",
            SolvePath::Newton => "newton",
            SolvePath::Reused => "reused",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedTrace<T> {
    pub path: SolvePath,
    pub picard_iterations: usize,
    pub newton_iterations: usize,
    /// `H¹` norms of successive updates (Picard then Newton).
    pub update_norms: Vec<T>,
    /// `‖(A + μ)u − t·χ·b_σ(u)‖₂`.
    pub residual: T,
    pub omega: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedOptions {
    pub max_picard: usize,
    pub max_newton: usize,
}

impl Default for TruncatedOptions {
    fn default() -> Self {
        TruncatedOptions {
            max_picard: 2000,
            max_newton: 60,
        }
    }
}

const OMEGA_FLOOR: f64 = 1.0 / 64.0;

pub fn solve_truncated<T: Real>(
    p: &TruncatedProblem<'_, T>,
    t: T,
    start: &Field<T>,
    tol: T,
) -> Result<(Field<T>, TruncatedTrace<T>), SemilinearError> {
    solve_truncated_with(p, t, start, tol, &TruncatedOptions::default())
}

/// Damped Picard iteration `u ← (1−ω)u + ω(A + μ)⁻¹[t·χ·b_σ(u)]`, with `ω`
/// halved whenever the update grows. Below `ω = 1/64`, or when the
/// iteration budget runs out, switches to Newton–Krylov on
/// `G(u) = u − (A + μ)⁻¹[t·χ·b_σ(u)]`. Converged when the `H¹` update is at
/// most `tol` and the residual at most `tol·max(1, ‖t·χ·b_σ(u)‖₂)`.
pub fn solve_truncated_with<T: Real>(
    p: &TruncatedProblem<'_, T>,
    t: T,
    start: &Field<T>,
    tol: T,
    opts: &TruncatedOptions,
) -> Result<(Field<T>, TruncatedTrace<T>), SemilinearError> {
    let op = p.op;
    let dom = op.domain();
    let m = op.stiffness().shifted(p.mu);
    let inner = (T::epsilon() * T::lit(1e3)).max((tol * T::lit(1e-3)).min(T::lit(1e-10)));
    let solve = |rhs: &[T]| -> Result<Vec<T>, SolveError> {
        Ok(conjugate_gradient(&m, rhs, None, inner, default_max_iter(m.dim()))?.x)
    };
    let residual = |u: &Field<T>, b: &[T]| -> (T, T) {
        let mu = m.apply(u.values());
        let r: Vec<T> = mu.iter().zip(b).map(|(&a, &bi)| a - bi).collect();
        let w = dom.cell_volume();
        let rn = (dot(&r, &r) * w).sqrt();
        let bn = (dot(b, b) * w).sqrt();
        (rn, T::one().max(bn))
    };

    let mut trace = TruncatedTrace {
        path: SolvePath::Picard,
        picard_iterations: 0,
        newton_iterations: 0,
        update_norms: Vec::new(),
        residual: T::infinity(),
        omega: T::one(),
    };
    let mut u = start.clone();
    let mut b = p.source(&u, t)?;
    let mut omega = T::one();
    let mut prev = T::infinity();
    while trace.picard_iterations < opts.max_picard {
        let w = solve(&b)?;
        let next: Vec<T> = u.values().iter().zip(&w).map(|(&a, &c)| a + omega * (c - a)).collect();
        let next = Field::from_values(dom, 1, next);
        let upd = op.h1_norm(&next.sub(&u));
        u = next;
        b = p.source(&u, t)?;
        trace.picard_iterations += 1;
        trace.update_norms.push(upd);
        let (res, scale) = residual(&u, &b);
        trace.residual = res;
        if upd <= tol && res <= tol * scale {
            trace.omega = omega;
            return Ok((u, trace));
        }
        if upd > prev {
            omega = omega / T::lit(2.0);
            if omega < T::lit(OMEGA_FLOOR) {
                break;
            }
        }
        prev = upd;
    }
    trace.omega = omega;

    // Newton–Krylov fallback on G(u) = u − M⁻¹ t χ b_σ(u).
    trace.path = SolvePath::Newton;
    let g_of = |u: &Field<T>| -> Result<Vec<T>, SemilinearError> {
        let w = solve(&p.source(u, t)?)?;
        Ok(u.values().iter().zip(&w).map(|(&a, &c)| a - c).collect())
    };
    let norm2 = |v: &[T]| dot(v, v).sqrt();
    let mut g = g_of(&u)?;
    while trace.newton_iterations < opts.max_newton {
        let gn = norm2(&g);
        let u_norm = norm2(u.values());
        let jv = |v: &[T]| -> Vec<T> {
            let vn = norm2(v);
            if vn == T::zero() {
                return vec![T::zero(); v.len()];
            }
            let eta = T::epsilon().sqrt() * (T::one() + u_norm) / vn;
            let shifted: Vec<T> = u.values().iter().zip(v).map(|(&a, &c)| a + eta * c).collect();
            match g_of(&Field::from_values(dom, 1, shifted)) {
                Ok(gs) => gs.iter().zip(&g).map(|(&a, &c)| (a - c) / eta).collect(),
                Err(_) => vec![T::nan(); v.len()],
            }
        };
        let rhs: Vec<T> = g.iter().map(|&v| -v).collect();
        let forcing = T::lit(1e-4).min(gn.sqrt()).max(T::epsilon() * T::lit(10.0));
        let (step, _, _) = gmres(jv, &rhs, forcing, 40, 400);
        if step.iter().any(|v| !v.is_finite()) {
            break;
        }
        let mut lambda = T::one();
        let mut accepted = None;
        for _ in 0..30 {
            let cand: Vec<T> = u.values().iter().zip(&step).map(|(&a, &c)| a + lambda * c).collect();
            let cand = Field::from_values(dom, 1, cand);
            let gc = g_of(&cand)?;
            if norm2(&gc) < gn || gn == T::zero() {
                accepted = Some((cand, gc));
                break;
            }
            lambda = lambda / T::lit(2.0);
        }
        trace.newton_iterations += 1;
        let Some((cand, gc)) = accepted else { break };
        let upd = op.h1_norm(&cand.sub(&u));
        u = cand;
        g = gc;
        b = p.source(&u, t)?;
        trace.update_norms.push(upd);
        let (res, scale) = residual(&u, &b);
        trace.residual = res;
        if upd <= tol && res <= tol * scale {
            return Ok((u, trace));
        }
    }
    Err(SemilinearError::NoConvergence {
        level: 0,
        update: trace.update_norms.last().map_or(f64::NAN, |v| v.as_f64()),
        residual: trace.residual.as_f64(),
        updates: trace.update_norms.iter().map(|v| v.as_f64()).collect(),
    })
}

/// `‖Lap u − f(·, u, ∇u)‖₂` over the unknowns of `op`; `spec` is bound with `lambda1`.
pub fn residual_norm<T: Real>(op: &Elliptic<T>, u: &Field<T>, spec: &SemilinearitySpec<T>, lambda1: T) -> Result<T, SemilinearError> {
    let bound = spec.bind_params(lambda1);
    let fv = nemytskii(op, &bound.f, u.values(), u)?;
    let au = op.apply(u);
    let r = Field::from_values(u.domain(), 1, au.values().iter().zip(&fv).map(|(&a, &b)| a - b).collect());
    Ok(r.norm())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelRecord<T> {
    pub k: usize,
    pub nodes: usize,
    pub path: SolvePath,
    pub iterations: usize,
    pub update_norms: Vec<T>,
    pub residual: T,
    /// `‖u_k − u_{k−1}‖_{H¹}` (`‖u_1‖_{H¹}` on the first level).
    pub h1_change: T,
    /// `min(u_k − v↓, v↑ − u_k)`.
    pub domination_margin: T,
    pub h1_norm: T,
}

#[derive(Debug, Clone)]
pub struct SemilinearOptions<T> {
    /// Base scale `s₀` of the exhaustion; defaults to a quarter of the largest
    /// half-extent of the bounding box.
    pub s0: Option<T>,
    /// Reuse a previously computed `λ₁`.
    pub lambda1: Option<T>,
    /// Initial iterate of the first level.
    pub start: Option<Field<T>>,
    /// Run the coercivity and growth falsifiers first.
    pub check_preconditions: bool,
    pub falsify: FalsifyOptions<T>,
    pub budget: usize,
    pub truncated: TruncatedOptions,
    /// Tolerance of the sandwich solves (defaults to `tol`).
    pub sandwich_tol: Option<T>,
}

impl<T: Real> Default for SemilinearOptions<T> {
    fn default() -> Self {
        SemilinearOptions {
            s0: None,
            lambda1: None,
            start: None,
            check_preconditions: true,
            falsify: FalsifyOptions::default(),
            budget: 2000,
            truncated: TruncatedOptions::default(),
            sandwich_tol: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport<T> {
    pub u: Field<T>,
    pub lambda1: T,
    pub mu: T,
    pub lmax: T,
    pub lower: SandwichResult<T>,
    pub upper: SandwichResult<T>,
    pub h: Field<T>,
    pub levels: Vec<LevelRecord<T>>,
    pub h1_norm: T,
    pub h1: H1Constant<T>,
    pub residual: T,
    pub checks: Vec<Check>,
    pub s0: T,
}

impl<T: Real> SolveReport<T> {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    /// `(k, iterations, update_norm, residual)` rows.
    pub fn level_csv(&self) -> String {
        let mut s = String::from("k,nodes,path,iterations,update_norm,residual,h1_change,domination_margin\n");
        for r in &self.levels {
            let upd = r.update_norms.last().copied().unwrap_or(T::zero());
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.k,
                r.nodes,
                r.path,
                r.iterations,
                fmt_num(upd),
                fmt_num(r.residual),
                fmt_num(r.h1_change),
                fmt_num(r.domination_margin)
            ));
        }
        s
    }
}

/// Data field `h(x)` on the unknowns of `op`.
pub fn data_field<T: Real>(op: &Elliptic<T>, e: &Expr) -> Result<Field<T>, SemilinearError> {
    let dom = op.domain();
    let values = (0..dom.len())
        .map(|n| {
            let x = dom.coords(n);
            e.eval(&Point::at(x, T::zero())).map_err(|source| SemilinearError::Eval {
                x: x.iter().map(|v| v.as_f64()).collect(),
                source,
            })
        })
        .collect::<Result<Vec<T>, _>>()?;
    Ok(Field::from_values(dom, 1, values))
}

/// Default `s₀`: a quarter of the largest half-extent of the bounding box.
pub fn default_s0<T: Real>(dom: &GridDomain<T>) -> T {
    let b = dom.bbox();
    b.lo.iter()
        .zip(&b.hi)
        .map(|(&lo, &hi)| (hi - lo) / T::lit(2.0))
        .fold(T::zero(), T::max)
        / T::lit(4.0)
}

pub fn compute_lambda1<T: Real>(op: &Elliptic<T>) -> Result<T, SolveError> {
    let tol = T::epsilon().sqrt() * T::lit(1e-4);
    Ok(smallest_eigenvalue(op.stiffness(), op.domain(), tol.max(T::epsilon() * T::lit(1e3)))?.0)
}

fn require_pass<T: Real>(verdict: Verdict<T>, kind: ConditionKind) -> Result<(), SemilinearError> {
    match verdict {
        Verdict::Witness(w) => Err(SemilinearError::Precondition {
            condition: kind.to_string(),
            detail: format!(
                "witness at x = {:?}, s = {:?}, xi = {:?}: lhs = {}, rhs = {}",
                w.x.iter().map(|v| v.as_f64()).collect::<Vec<_>>(),
                w.s.iter().map(|v| v.as_f64()).collect::<Vec<_>>(),
                w.xi.iter().map(|x| x.iter().map(|v| v.as_f64()).collect::<Vec<_>>()).collect::<Vec<_>>(),
                fmt_num(w.lhs),
                fmt_num(w.rhs)
            ),
        }),
        _ => Ok(()),
    }
}

/// Run the existence pipeline on the unknowns of `op`.
pub fn solve_semilinear<T: Real>(
    op: &Elliptic<T>,
    spec: &SemilinearitySpec<T>,
    tol: T,
    opts: &SemilinearOptions<T>,
) -> Result<SolveReport<T>, SemilinearError> {
    let dom = op.domain();
    let lambda1 = match opts.lambda1 {
        Some(l) => l,
        None => compute_lambda1(op)?,
    };
    let bound = spec.bind_params(lambda1);
    let l_max = lmax(spec.epsilon, lambda1);
    if !(spec.l < l_max) {
        return Err(ConditionError::Threshold {
            l: spec.l.as_f64(),
            lmax: l_max.as_f64(),
        }
        .into());
    }
    if opts.check_preconditions {
        for kind in [ConditionKind::Coercive, ConditionKind::Growth] {
            let v = falsify_condition(kind, spec, dom, lambda1, opts.budget, &opts.falsify)?;
            require_pass(v, kind)?;
        }
    }
    let h = data_field(op, &bound.h)?;
    let stol = opts.sandwich_tol.unwrap_or(tol);
    let upper = solve_linear_gradient(op, Side::Upper, lambda1, spec.epsilon, spec.l, &h, stol)?;
    let lower = solve_linear_gradient(op, Side::Lower, lambda1, spec.epsilon, spec.l, &h, stol)?;
    let mu = (spec.epsilon - lambda1).max(T::zero());
    let s0 = opts.s0.unwrap_or_else(|| default_s0(dom));
    let levels_max = saturation_level(dom, s0);

    let mut u = opts.start.clone().unwrap_or_else(|| Field::zeros(dom));
    let mut levels = Vec::new();
    let mut prev_level: Option<Arc<GridDomain<T>>> = None;
    let mut first = true;
    for k in 1..=levels_max {
        let level = exhaustion(dom, k, s0);
        if level.is_empty() {
            continue;
        }
        if prev_level.as_ref().is_some_and(|p| p.same_nodes(&level)) {
            levels.push(LevelRecord {
                k,
                nodes: level.len(),
                path: SolvePath::Reused,
                iterations: 0,
                update_norms: vec![],
                residual: levels.last().map_or(T::zero(), |r: &LevelRecord<T>| r.residual),
                h1_change: T::zero(),
                domination_margin: levels.last().map_or(T::zero(), |r: &LevelRecord<T>| r.domination_margin),
                h1_norm: op.h1_norm(&u),
            });
            continue;
        }
        let nodes = level.len();
        let level = Arc::new(level);
        let problem = TruncatedProblem::new(op, Arc::clone(&level), mu, &lower.v, &upper.v, &bound.f)?;
        let (next, trace) = solve_truncated_with(&problem, T::one(), &u, tol, &opts.truncated).map_err(|e| match e {
            SemilinearError::NoConvergence {
                update,
                residual,
                updates,
                ..
            } => SemilinearError::NoConvergence {
                level: k,
                update,
                residual,
                updates,
            },
            other => other,
        })?;
        let h1_change = if first { op.h1_norm(&next) } else { op.h1_norm(&next.sub(&u)) };
        first = false;
        let dom_check = verify_domination(&next, &lower.v, &upper.v, T::lit(1e-8))?;
        levels.push(LevelRecord {
            k,
            nodes,
            path: trace.path,
            iterations: trace.picard_iterations + trace.newton_iterations,
            update_norms: trace.update_norms,
            residual: trace.residual,
            h1_change,
            domination_margin: T::lit(dom_check.margin),
            h1_norm: op.h1_norm(&next),
        });
        u = next;
        prev_level = Some(level);
    }

    let h1 = h1_constant(lambda1, spec.epsilon, spec.l)?;
    let h1_norm = op.h1_norm(&u);
    let mut checks = Vec::new();
    let worst_level = levels
        .iter()
        .map(|r| r.domination_margin)
        .fold(T::infinity(), T::min);
    let domination = verify_domination(&u, &lower.v, &upper.v, T::lit(1e-8))?.with("worst_level_margin", fmt_num(worst_level));
    checks.push(domination);
    checks.push(verify_h1_bound(op, &u, &h, h1.c).with("rho0", fmt_num(h1.rho0)));

    let fv = nemytskii(op, &bound.f, u.values(), &u)?;
    let au = op.apply(&u);
    let res_field = Field::from_values(dom, 1, au.values().iter().zip(&fv).map(|(&a, &b)| a - b).collect());
    let residual = res_field.norm();
    let scale = T::one().max(Field::from_values(dom, 1, fv.clone()).norm());
    checks.push(
        Check::new("residual", "||Lap u - f(x,u,grad u)||_2 <= tol * scale", (tol * scale - residual).as_f64(), 0.0)
            .with("residual", fmt_num(residual))
            .with("scale", fmt_num(scale)),
    );
    checks.push(f0_check(op, &bound, &u, &fv, &lower.v, &upper.v, lambda1)?);

    Ok(SolveReport {
        u,
        lambda1,
        mu,
        lmax: l_max,
        lower,
        upper,
        h,
        levels,
        h1_norm,
        h1,
        residual,
        checks,
        s0,
    })
}

/// `|f(x, u, ∇u)| ≤ f₀(x) + L₀|∇u|` with
/// `f₀ = max{γ(env) + h₀, (λ₁ − ε)₊·env + h}` and `env = max(|v↓|, |v↑|)`.
fn f0_check<T: Real>(
    op: &Elliptic<T>,
    spec: &SemilinearitySpec<T>,
    u: &Field<T>,
    fv: &[T],
    lower: &Field<T>,
    upper: &Field<T>,
    lambda1: T,
) -> Result<Check, SemilinearError> {
    let dom = op.domain();
    let grad = op.gradient(u).pointwise_norm();
    let excess = (lambda1 - spec.epsilon).max(T::zero());
    let mut margin = T::infinity();
    let mut allowance = T::zero();
    let mut f0_sq = T::zero();
    for n in 0..dom.len() {
        let x = dom.coords(n);
        let env = lower.values()[n].abs().max(upper.values()[n].abs());
        let ev = |e: &Expr, s: T| {
            e.eval(&Point::at(x, s)).map_err(|source| SemilinearError::Eval {
                x: x.iter().map(|v| v.as_f64()).collect(),
                source,
            })
        };
        let f0 = (ev(&spec.gamma, env)? + ev(&spec.h0, T::zero())?).max(excess * env + ev(&spec.h, T::zero())?);
        f0_sq += f0 * f0;
        let bound = f0 + spec.l0 * grad.values()[n];
        margin = margin.min(bound - fv[n].abs());
        allowance = allowance.max(T::lit(1e-9) * (bound + fv[n].abs()));
    }
    let f0_norm = (f0_sq * dom.cell_volume()).sqrt();
    Ok(Check::new("f0_majorant", "|f(x,u,grad u)| <= f0 + L0 |grad u|", margin.as_f64(), allowance.as_f64())
        .with("f0_norm", fmt_num(f0_norm)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport<T> {
    pub trials: usize,
    pub s0_values: Vec<T>,
    pub max_distance: T,
    pub threshold: T,
    pub passed: bool,
}

/// Solve `trials` times from random starts with random exhaustion scales and
/// compare the results in `H¹`. Requires the monotonicity falsifier to pass.
pub fn uniqueness_probe<T: Real>(
    op: &Elliptic<T>,
    spec: &SemilinearitySpec<T>,
    trials: usize,
    tol: T,
    seed: u64,
    opts: &SemilinearOptions<T>,
) -> Result<UniquenessReport<T>, SemilinearError> {
    let lambda1 = match opts.lambda1 {
        Some(l) => l,
        None => compute_lambda1(op)?,
    };
    let v = falsify_condition(ConditionKind::Monotone, spec, op.domain(), lambda1, opts.budget, &opts.falsify)?;
    require_pass(v, ConditionKind::Monotone)?;
    let base = opts.s0.unwrap_or_else(|| default_s0(op.domain()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut solutions: Vec<Field<T>> = Vec::new();
    let mut s0_values = Vec::new();
    for _ in 0..trials {
        let s0 = base * T::lit(rng.gen_range(0.5..1.5));
        let amp: f64 = rng.gen_range(0.0..1.0);
        let start_vals: Vec<T> = (0..op.domain().len()).map(|_| T::lit(amp * rng.gen_range(-1.0..1.0))).collect();
        let run_opts = SemilinearOptions {
            s0: Some(s0),
            lambda1: Some(lambda1),
            start: Some(Field::from_values(op.domain(), 1, start_vals)),
            check_preconditions: false,
            ..opts.clone()
        };
        let report = solve_semilinear(op, spec, tol, &run_opts)?;
        solutions.push(report.u);
        s0_values.push(s0);
    }
    let mut max_distance = T::zero();
    for i in 0..solutions.len() {
        for j in i + 1..solutions.len() {
            max_distance = max_distance.max(op.h1_norm(&solutions[i].sub(&solutions[j])));
        }
    }
    let threshold = T::lit(20.0) * tol;
    Ok(UniquenessReport {
        trials,
        s0_values,
        max_distance,
        threshold,
        passed: max_distance <= threshold,
    })
}

/// `(A + μ)` for the truncated problems.
pub fn shifted_stiffness<T: Real>(op: &Elliptic<T>, mu: T) -> SparseOperator<T> {
    op.stiffness().shifted(mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_domain, BoundingBox, DomainSpec};
    use crate::expr::parse_expr;

    fn interval(h: f64) -> Elliptic<f64> {
        let d = build_domain(&DomainSpec::Interval { a: 0.0, b: 1.0 }, h, &BoundingBox::unit(1)).unwrap();
        Elliptic::dirichlet(Arc::new(d))
    }

    fn spec(f: &str, h: &str, h0: &str, gamma: &str, eps: f64) -> SemilinearitySpec<f64> {
        let e = |t: &str| parse_expr(t, 1).unwrap();
        SemilinearitySpec::new(e(f), e(h), e(h0), e(gamma), eps, 0.0, 0.0, 2.0, 1.0).unwrap()
    }

    #[test]
    fn sigma_examples() {
        let d = interval(0.25).domain().clone();
        let lo = Field::constant(&d, -1.0);
        let hi = Field::constant(&d, 2.0);
        let u = Field::from_values(&d, 1, vec![5.0, 0.5, -3.0]);
        assert_eq!(truncate_sigma(&lo, &hi, &u).unwrap().values(), &[2.0, 0.5, -1.0]);
        let inside = Field::from_values(&d, 1, vec![0.1, -0.9, 1.9]);
        assert_eq!(truncate_sigma(&lo, &hi, &inside).unwrap(), inside);
        let z = Field::zeros(&d);
        assert!(truncate_sigma(&z, &z, &u).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(matches!(truncate_sigma(&hi, &lo, &u), Err(SemilinearError::Ordering { node: 0, .. })));
    }

    #[test]
    fn truncated_zero_and_constant() {
        let op = interval(0.25);
        let d = op.domain().clone();
        let band = (Field::constant(&d, -10.0), Field::constant(&d, 10.0));
        let zero = parse_expr("0", 1).unwrap();
        let p = TruncatedProblem::new(&op, d.clone(), 1.0, &band.0, &band.1, &zero).unwrap();
        let (u, _) = solve_truncated(&p, 1.0, &Field::zeros(&d), 1e-12).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
        let one = parse_expr("1", 1).unwrap();
        let p = TruncatedProblem::new(&op, d.clone(), 0.0, &band.0, &band.1, &one).unwrap();
        let (u, trace) = solve_truncated(&p, 1.0, &Field::zeros(&d), 1e-12).unwrap();
        assert_eq!(trace.path, SolvePath::Picard);
        for (g, w) in u.values().iter().zip([3.0 / 32.0, 1.0 / 8.0, 3.0 / 32.0]) {
            assert!((g - w).abs() < 1e-13);
        }
    }

    #[test]
    fn residual_of_zero_is_root_measure() {
        let op = interval(0.125);
        let s = spec("1", "1", "1", "0", 1.0);
        let r = residual_norm(&op, &Field::zeros(op.domain()), &s, 1.0).unwrap();
        assert!((r - op.domain().measure().sqrt()).abs() < 1e-14);
    }

    #[test]
    fn homogeneous_problem_is_zero() {
        let op = interval(0.125);
        let s = spec("(lambda1 - eps)*s", "0", "0", "lambda1*s", 1.0);
        let r = solve_semilinear(&op, &s, 1e-10, &SemilinearOptions::default()).unwrap();
        assert!(r.u.max_abs() == 0.0 && r.upper.v.max_abs() == 0.0 && r.lower.v.max_abs() == 0.0);
        assert!(r.all_pass(), "{:?}", r.checks);
    }

    #[test]
    fn cubic_absorption_is_symmetric_and_dominated() {
        let op = interval(1.0 / 16.0);
        let s = spec("-s^3 + 1", "1", "1", "s^3", 5.0);
        let r = solve_semilinear(&op, &s, 1e-11, &SemilinearOptions::default()).unwrap();
        assert!(r.all_pass(), "{:?}", r.checks);
        let v = r.u.values();
        assert!(v.iter().all(|&x| x > 0.0));
        for i in 0..v.len() {
            assert!((v[i] - v[v.len() - 1 - i]).abs() < 1e-12);
        }
        let tail = r.levels.last().unwrap();
        assert_eq!(tail.nodes, op.domain().len());
    }

    #[test]
    fn monotonicity_gate() {
        let op = interval(0.125);
        let s = spec("sin(10*s)", "1", "1", "1", 1.0);
        assert!(matches!(
            uniqueness_probe(&op, &s, 2, 1e-10, 1, &SemilinearOptions::default()),
            Err(SemilinearError::Precondition { .. })
        ));
    }
}
