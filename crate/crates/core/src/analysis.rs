//! Norms, the a priori bound checks and the certificate they feed.

use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::conditions::{moser_params, q_double_star, sobolev_exponent, ConditionError};
use crate::discrete::{Elliptic, Field};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("fields live on different domains")]
    DomainMismatch,
    #[error(transparent)]
    Condition(#[from] ConditionError),
}

/// `(Σ|u|^p h^d)^{1/p}`, or `max|u|` for infinite `p`.
pub fn lp_norm<T: Real>(u: &Field<T>, p: T) -> T {
    let m = u.max_abs();
    if p.is_infinite() || m == T::zero() {
        return m;
    }
    let w = u.domain().cell_volume();
    let sum = u.values().iter().fold(T::zero(), |acc, &v| acc + (v.abs() / m).powf(p));
    m * (sum * w).powf(T::one() / p)
}

/// `M(r) = max{‖u‖₂, ‖u‖_r}`.
pub fn m_norm<T: Real>(u: &Field<T>, r: T) -> T {
    lp_norm(u, T::lit(2.0)).max(lp_norm(u, r))
}

/// `ρ(p) = M(p) + ‖h‖_p`.
pub fn rho<T: Real>(u: &Field<T>, h: &Field<T>, p: T) -> T {
    m_norm(u, p) + lp_norm(h, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckVerdict {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for CheckVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckVerdict::Pass => "PASS",
            CheckVerdict::Fail => "FAIL",
            CheckVerdict::Skipped => "SKIPPED",
        })
    }
}

/// One certificate entry. The verdict is `PASS` iff `margin ≥ -allowance`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    /// The statement being checked.
    pub claim: String,
    pub margin: f64,
    pub allowance: f64,
    pub verdict: CheckVerdict,
    /// Constants and measured quantities, in insertion order.
    pub values: Vec<(String, String)>,
    pub witness: Option<String>,
}

impl Check {
    pub fn new(name: &str, claim: &str, margin: f64, allowance: f64) -> Self {
        let verdict = if margin >= -allowance {
            CheckVerdict::Pass
        } else {
            CheckVerdict::Fail
        };
        Check {
            name: name.into(),
            claim: claim.into(),
            margin,
            allowance,
            verdict,
            values: Vec::new(),
            witness: None,
        }
    }

    pub fn skipped(name: &str, claim: &str, reason: &str) -> Self {
        Check {
            verdict: CheckVerdict::Skipped,
            witness: Some(reason.into()),
            ..Check::new(name, claim, 0.0, 0.0)
        }
    }

    pub fn with(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.values.push((key.into(), value.to_string()));
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict != CheckVerdict::Fail
    }
}

/// `min_x min(u − v↓, v↑ − u)`; passes when it is at least `-tol`.
pub fn verify_domination<T: Real>(u: &Field<T>, vlow: &Field<T>, vup: &Field<T>, tol: T) -> Result<Check, AnalysisError> {
    if !u.same_domain(vlow) || !u.same_domain(vup) {
        return Err(AnalysisError::DomainMismatch);
    }
    let mut margin = T::infinity();
    let mut at = 0;
    for (n, ((&x, &lo), &hi)) in u.values().iter().zip(vlow.values()).zip(vup.values()).enumerate() {
        let m = (x - lo).min(hi - x);
        if m < margin {
            margin = m;
            at = n;
        }
    }
    let mut check = Check::new("domination", "v_lower <= u <= v_upper", margin.as_f64(), tol.as_f64());
    if check.verdict == CheckVerdict::Fail {
        let x: Vec<f64> = u.domain().coords(at).iter().map(|v| v.as_f64()).collect();
        check.witness = Some(format!("node {at} at {x:?}"));
    }
    Ok(check)
}

/// `C‖h‖₂ − ‖u‖_{H¹}` with `‖u‖_{H¹}² = E(u) + ‖u‖₂²`.
pub fn verify_h1_bound<T: Real>(op: &Elliptic<T>, u: &Field<T>, hdata: &Field<T>, c: T) -> Check {
    let h1 = op.h1_norm(u);
    let hn = hdata.norm();
    Check::new("h1_bound", "||u||_H1 <= C ||h||_2", (c * hn - h1).as_f64(), 0.0)
        .with("C", fmt_num(c))
        .with("h1_norm", fmt_num(h1))
        .with("h_norm", fmt_num(hn))
}

#[derive(Debug, Clone, PartialEq)]
pub enum MoserCase<T> {
    /// `q < d̂/2`: exponents `2 → 2** → …` up to `q**`.
    Subcritical,
    /// `q > d̂/2`: exponents `2*β_n`.
    Supercritical { chi: T, theta: T, beta: Vec<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoserChain<T> {
    pub case: MoserCase<T>,
    pub qss: T,
    /// Exponents along the chain.
    pub exponents: Vec<T>,
    /// `M(p)` at each exponent.
    pub norms: Vec<T>,
    /// Smallest constant making the recursion hold at every step (`None` for `u = 0`).
    pub c1_raw: Option<T>,
    /// `max(1, c1_raw)`.
    pub c1: Option<T>,
    /// `‖u‖_{q**}/(‖u‖₂ + ‖h‖_q)`.
    pub ratio: T,
}

/// Relative gap to `max|u|` below which `‖u‖_p` counts as saturated.
const SATURATION: f64 = 1e-3;

pub fn moser_chain<T: Real>(u: &Field<T>, hdata: &Field<T>, q: T, d_hat: T) -> Result<MoserChain<T>, AnalysisError> {
    if !u.same_domain(hdata) {
        return Err(AnalysisError::DomainMismatch);
    }
    let qss = q_double_star(q, d_hat)?;
    let two = T::lit(2.0);
    let two_star = sobolev_exponent(d_hat);
    let degenerate = u.max_abs() == T::zero();
    // log of the recursion's required constant at one step.
    let step = |beta: T, p: T, lo: T, hi: T| -> T {
        let top = two * beta * m_norm(u, hi).ln();
        let bottom = two * beta.ln() + rho(u, hdata, p).ln() + (two * beta - T::one()) * m_norm(u, lo).ln();
        top - bottom
    };
    let (case, exponents, log_c1) = if qss.is_finite() {
        let mut exps = vec![two];
        let mut log_c1 = T::neg_infinity();
        loop {
            let p = exps[exps.len() - 1].min(q);
            let next = q_double_star(p, d_hat)?;
            // 2*β = p** with p′(2β − 1) = p**.
            log_c1 = log_c1.max(step(next / two_star, p, next, next));
            exps.push(next);
            if p == q {
                break;
            }
        }
        (MoserCase::Subcritical, exps, log_c1)
    } else {
        let mp = moser_params(q, d_hat)?;
        let two_star = mp.two_star;
        let u_inf = u.max_abs();
        let mut exps = vec![two_star];
        let mut log_c1 = T::neg_infinity();
        for n in 1..mp.beta.len() {
            let hi = two_star * mp.beta[n];
            let lo = two_star * mp.beta[n - 1];
            log_c1 = log_c1.max(step(mp.beta[n], q, lo, hi));
            exps.push(hi);
            if (u_inf - lp_norm(u, hi)) <= T::lit(SATURATION) * u_inf {
                break;
            }
        }
        (
            MoserCase::Supercritical {
                chi: mp.chi,
                theta: mp.theta,
                beta: mp.beta,
            },
            exps,
            log_c1,
        )
    };
    let norms = exponents.iter().map(|&p| m_norm(u, p)).collect();
    let c1_raw = (!degenerate).then(|| log_c1.exp());
    let denom = lp_norm(u, two) + lp_norm(hdata, q);
    let ratio = if degenerate { T::zero() } else { lp_norm(u, qss) / denom };
    Ok(MoserChain {
        case,
        qss,
        exponents,
        norms,
        c1_raw,
        c1: c1_raw.map(|c| c.max(T::one())),
        ratio,
    })
}

/// Shortest round-trip representation of a number, as `f64`.
pub fn fmt_num<T: Real>(x: T) -> String {
    let v = x.as_f64();
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:e}")
    }
}

/// Checks bound to the constants that produced them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Certificate {
    pub seed: u64,
    pub config_hash: String,
    pub constants: Vec<(String, String)>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl Certificate {
    pub fn new(seed: u64, config_hash: &str) -> Self {
        Certificate {
            seed,
            config_hash: config_hash.into(),
            ..Certificate::default()
        }
    }

    pub fn constant(&mut self, key: &str, value: impl fmt::Display) {
        self.constants.push((key.into(), value.to_string()));
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    /// Human-readable `key: value` block.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "config_hash: {}", self.config_hash);
        for (k, v) in &self.constants {
            let _ = writeln!(s, "{k}: {v}");
        }
        for c in &self.checks {
            let _ = writeln!(s, "[{}] {}", c.name, c.verdict);
            let _ = writeln!(s, "  claim: {}", c.claim);
            let _ = writeln!(s, "  margin: {:e}", c.margin);
            if c.allowance != 0.0 {
                let _ = writeln!(s, "  allowance: {:e}", c.allowance);
            }
            for (k, v) in &c.values {
                let _ = writeln!(s, "  {k}: {v}");
            }
            if let Some(w) = &c.witness {
                let _ = writeln!(s, "  witness: {w}");
            }
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }

    /// One `check = {name, margin, verdict}` record per line.
    pub fn machine_lines(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "config_hash = \"{}\"", self.config_hash);
        for c in &self.checks {
            let _ = writeln!(
                s,
                "check = {{name = \"{}\", margin = {:e}, verdict = \"{}\"}}",
                c.name, c.margin, c.verdict
            );
        }
        s
    }
}
