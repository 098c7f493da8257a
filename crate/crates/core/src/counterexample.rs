//! The complex-valued problem `-Δu + i b·∇u − (λ₁ − ε)u = g` with `|b| = r`:
//! Fourier symbol, choice of `b` and a blow-up study on truncated strips.

use num_complex::Complex;
use rayon::prelude::*;
use thiserror::Error;

use crate::conditions::lmax;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CounterexampleError {
    #[error("infeasible: |b| = {r} is below the required {required}")]
    Infeasible { r: f64, required: f64 },
    #[error("case {case} is inconsistent with lambda1 = {lambda1}, eps = {epsilon}")]
    CaseMismatch { case: CaseTag, lambda1: f64, epsilon: f64 },
    #[error("invalid study parameters: {0}")]
    Invalid(String),
    #[error("no symbol zero: discriminant {0:e} < 0")]
    NoZero(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseTag {
    /// `λ₁ = 0`.
    I,
    /// `ε ≤ 2λ₁`.
    Ii,
    /// `0 < 2λ₁ ≤ ε`.
    Iii,
}

impl CaseTag {
    /// Case of `(λ₁, ε)`; the boundary `ε = 2λ₁` is reported as case (ii).
    pub fn classify<T: Real>(lambda1: T, epsilon: T) -> CaseTag {
        if lambda1 == T::zero() {
            CaseTag::I
        } else if epsilon <= T::lit(2.0) * lambda1 {
            CaseTag::Ii
        } else {
            CaseTag::Iii
        }
    }

    pub fn admits<T: Real>(self, lambda1: T, epsilon: T) -> bool {
        let two = T::lit(2.0);
        match self {
            CaseTag::I => lambda1 == T::zero(),
            CaseTag::Ii => lambda1 > T::zero() && epsilon <= two * lambda1,
            CaseTag::Iii => lambda1 > T::zero() && two * lambda1 <= epsilon,
        }
    }
}

impl std::fmt::Display for CaseTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CaseTag::I => "i",
            CaseTag::Ii => "ii",
            CaseTag::Iii => "iii",
        })
    }
}

impl std::str::FromStr for CaseTag {
    type Err = CounterexampleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "i" => Ok(CaseTag::I),
            "ii" => Ok(CaseTag::Ii),
            "iii" => Ok(CaseTag::Iii),
            other => Err(CounterexampleError::Invalid(format!("unknown case `{other}`"))),
        }
    }
}

/// `p(ζ, ξ) = ζ² + |ξ|² − b₁ζ − b′·ξ − (λ₁ − ε)`.
pub fn symbol_p<T: Real>(zeta: T, xi: &[T], b: &[T], lambda1: T, epsilon: T) -> T {
    let xi2: T = xi.iter().map(|&v| v * v).sum();
    let bxi: T = xi.iter().zip(&b[1..]).map(|(&x, &c)| x * c).sum();
    zeta * zeta + xi2 - b[0] * zeta - bxi - (lambda1 - epsilon)
}

/// `b₁` per case, the remaining mass `√(r² − b₁²)` on the second coordinate.
pub fn choose_b<T: Real>(case: CaseTag, r: T, lambda1: T, epsilon: T, d: usize) -> Result<Vec<T>, CounterexampleError> {
    if d < 2 {
        return Err(CounterexampleError::Invalid(format!("dimension {d} < 2")));
    }
    if !case.admits(lambda1, epsilon) {
        return Err(CounterexampleError::CaseMismatch {
            case,
            lambda1: lambda1.as_f64(),
            epsilon: epsilon.as_f64(),
        });
    }
    let b1 = match case {
        CaseTag::I => T::zero(),
        CaseTag::Ii => epsilon / lambda1.sqrt(),
        CaseTag::Iii => T::lit(2.0) * lambda1.sqrt(),
    };
    let required = lmax(epsilon, lambda1).max(b1);
    if r < required * (T::one() - T::lit(1e-12)) {
        return Err(CounterexampleError::Infeasible {
            r: r.as_f64(),
            required: required.as_f64(),
        });
    }
    let mut b = vec![T::zero(); d];
    b[0] = b1;
    b[1] = (r * r - b1 * b1).max(T::zero()).sqrt();
    Ok(b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolProblem<T> {
    pub lambda1: T,
    pub epsilon: T,
    pub r: T,
    pub case: CaseTag,
    pub b: Vec<T>,
}

impl<T: Real> SymbolProblem<T> {
    pub fn new(case: CaseTag, lambda1: T, epsilon: T, r: T, d: usize) -> Result<Self, CounterexampleError> {
        if !(epsilon > T::zero()) || lambda1 < T::zero() {
            return Err(CounterexampleError::Invalid("need eps > 0 and lambda1 >= 0".into()));
        }
        let b = choose_b(case, r, lambda1, epsilon, d)?;
        Ok(SymbolProblem {
            lambda1,
            epsilon,
            r,
            case,
            b,
        })
    }

    pub fn lmax(&self) -> T {
        lmax(self.epsilon, self.lambda1)
    }

    /// A zero `(ζ*, ξ*)` of the symbol with `ζ* = √λ₁` and `ξ*` along the
    /// second axis, from the quadratic `ξ² − b₂ξ + (ζ*² − b₁ζ* − λ₁ + ε) = 0`.
    pub fn symbol_zero(&self) -> Result<(T, Vec<T>), CounterexampleError> {
        let zeta = self.lambda1.sqrt();
        let c = zeta * zeta - self.b[0] * zeta - (self.lambda1 - self.epsilon);
        let b2 = self.b[1];
        let mut disc = b2 * b2 - T::lit(4.0) * c;
        let scale = (b2 * b2).max(T::lit(4.0) * c.abs()).max(T::one());
        if disc < T::zero() && disc > -T::lit(1e-12) * scale {
            disc = T::zero();
        }
        if disc < T::zero() {
            return Err(CounterexampleError::NoZero(disc.as_f64()));
        }
        let mut xi = vec![T::zero(); self.b.len() - 1];
        xi[0] = (b2 - disc.sqrt()) / T::lit(2.0);
        Ok((zeta, xi))
    }
}

/// Dense-band complex LU with partial pivoting.
struct BandLu<T> {
    n: usize,
    kl: usize,
    width: usize,
    a: Vec<Complex<T>>,
    piv: Vec<usize>,
}

impl<T: Real> BandLu<T> {
    /// Row `i` stores columns `i − kl ..= i + kl + ku`.
    fn new(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandLu {
            n,
            kl,
            width,
            a: vec![Complex::new(T::zero(), T::zero()); n * width],
            piv: vec![0; n],
        }
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    fn set(&mut self, i: usize, j: usize, v: Complex<T>) {
        let s = self.slot(i, j);
        self.a[s] = v;
    }

    fn factor(&mut self) -> Result<(), usize> {
        let n = self.n;
        let reach = self.width - self.kl - 1;
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.a[self.slot(k, k)].norm();
            for r in k + 1..=last_row {
                let v = self.a[self.slot(r, k)].norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == T::zero() {
                return Err(k);
            }
            self.piv[k] = p;
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (sk, sp) = (self.slot(k, j), self.slot(p, j));
                    self.a.swap(sk, sp);
                }
            }
            let pivot = self.a[self.slot(k, k)];
            for r in k + 1..=last_row {
                let sr = self.slot(r, k);
                let m = self.a[sr] / pivot;
                if m == Complex::new(T::zero(), T::zero()) {
                    continue;
                }
                self.a[sr] = m;
                for j in k + 1..=last_col {
                    let u = self.a[self.slot(k, j)];
                    let s = self.slot(r, j);
                    self.a[s] = self.a[s] - m * u;
                }
            }
        }
        Ok(())
    }

    fn solve(&self, b: &mut [Complex<T>]) {
        let n = self.n;
        for k in 0..n {
            let p = self.piv[k];
            b.swap(k, p);
            for r in k + 1..=(k + self.kl).min(n - 1) {
                let m = self.a[self.slot(r, k)];
                b[r] = b[r] - m * b[k];
            }
        }
        let reach = self.width - self.kl - 1;
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + reach).min(n - 1) {
                s = s - self.a[self.slot(k, j)] * b[j];
            }
            b[k] = s / self.a[self.slot(k, k)];
        }
    }
}

/// Raised-cosine window: 1 on `|s| ≤ 0.8`, tapering to 0 at `|s| = 1`.
pub fn window<T: Real>(s: T) -> T {
    let a = s.abs();
    let edge = T::lit(0.8);
    if a <= edge {
        T::one()
    } else if a >= T::one() {
        T::zero()
    } else {
        (T::one() + (T::PI() * (a - edge) / T::lit(0.2)).cos()) / T::lit(2.0)
    }
}

/// Geometry of a truncated study domain `(x₁ range) × (−T, T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripGeometry<T> {
    pub x1_lo: T,
    pub x1_hi: T,
    pub h: T,
}

impl<T: Real> StripGeometry<T> {
    /// Strip `(0, width)` with spacing adjusted so `width/h` is an integer.
    pub fn strip(width: T, h: T) -> Self {
        let cells = (width / h).round().max(T::lit(2.0));
        StripGeometry {
            x1_lo: T::zero(),
            x1_hi: width,
            h: width / cells,
        }
    }

    /// Smallest Dirichlet eigenvalue of the 1D second difference across the strip.
    pub fn lambda1(&self) -> T {
        let w = self.x1_hi - self.x1_lo;
        (T::lit(2.0) - T::lit(2.0) * (T::PI() * self.h / w).cos()) / (self.h * self.h)
    }
}

/// `‖u_T‖₂/‖g‖₂` for `Lap + i b·D − (λ₁ − ε)` on `geom × (−T, T)`, `g` the
/// windowed plane wave at `(ζ, ξ)`.
#[allow(clippy::too_many_arguments)]
pub fn strip_response<T: Real>(
    geom: &StripGeometry<T>,
    t: T,
    b: &[T],
    lambda1: T,
    epsilon: T,
    zeta: T,
    xi: T,
) -> Result<T, CounterexampleError> {
    Ok(strip_solution(geom, t, b, lambda1, epsilon, zeta, xi)?.ratio)
}

/// Solution of a strip problem, ordered with `x1` fastest on an `n1 × n2` grid.
#[derive(Debug, Clone)]
pub struct StripSolution<T> {
    pub ratio: T,
    pub u: Vec<Complex<T>>,
    pub n1: usize,
    pub n2: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn strip_solution<T: Real>(
    geom: &StripGeometry<T>,
    t: T,
    b: &[T],
    lambda1: T,
    epsilon: T,
    zeta: T,
    xi: T,
) -> Result<StripSolution<T>, CounterexampleError> {
    let h = geom.h;
    let n1 = ((geom.x1_hi - geom.x1_lo) / h).round().to_usize().unwrap_or(0).saturating_sub(1);
    let n2 = (T::lit(2.0) * t / h).round().to_usize().unwrap_or(0).saturating_sub(1);
    if n1 == 0 || n2 == 0 {
        return Err(CounterexampleError::Invalid(format!("width {t} leaves no interior nodes")));
    }
    let n = n1 * n2;
    let zero = Complex::new(T::zero(), T::zero());
    let mut lu = BandLu::new(n, n1, n1);
    let inv_h2 = T::one() / (h * h);
    let diag = Complex::new(T::lit(4.0) * inv_h2 - (lambda1 - epsilon), T::zero());
    let (c1, c2) = (b[0] / (T::lit(2.0) * h), b[1] / (T::lit(2.0) * h));
    let plus = |c: T| Complex::new(-inv_h2, c);
    let minus = |c: T| Complex::new(-inv_h2, -c);
    let idx = |i: usize, j: usize| j * n1 + i;
    let mut g = vec![zero; n];
    for j in 0..n2 {
        let x2 = -t + h * T::from_usize_lossy(j + 1);
        let w = window(x2 / t);
        for i in 0..n1 {
            let x1 = geom.x1_lo + h * T::from_usize_lossy(i + 1);
            let row = idx(i, j);
            lu.set(row, row, diag);
            if i + 1 < n1 {
                lu.set(row, idx(i + 1, j), plus(c1));
            }
            if i > 0 {
                lu.set(row, idx(i - 1, j), minus(c1));
            }
            if j + 1 < n2 {
                lu.set(row, idx(i, j + 1), plus(c2));
            }
            if j > 0 {
                lu.set(row, idx(i, j - 1), minus(c2));
            }
            g[row] = Complex::from_polar(w, zeta * x1 + xi * x2);
        }
    }
    let gn: T = g.iter().map(|v| v.norm_sqr()).sum::<T>().sqrt();
    lu.factor()
        .map_err(|k| CounterexampleError::Invalid(format!("singular pivot {k} at T = {t}")))?;
    let mut u = g;
    lu.solve(&mut u);
    let un: T = u.iter().map(|v| v.norm_sqr()).sum::<T>().sqrt();
    if !un.is_finite() {
        return Err(CounterexampleError::Invalid(format!("non-finite solution at T = {t}")));
    }
    Ok(StripSolution {
        ratio: un / gn,
        u,
        n1,
        n2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlowupVerdict {
    Blowup,
    NoBlowup,
    Inconclusive,
}

impl std::fmt::Display for BlowupVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BlowupVerdict::Blowup => "BLOWUP",
            BlowupVerdict::NoBlowup => "NO_BLOWUP",
            BlowupVerdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlowupRow<T> {
    pub t: T,
    pub resonant_ratio: T,
    pub control_ratio: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlowupStudy<T> {
    pub rows: Vec<BlowupRow<T>>,
    pub verdict: BlowupVerdict,
    pub b: Vec<T>,
    pub b_control: Vec<T>,
    pub zeta: T,
    pub xi: T,
    pub h: T,
    /// Set when a width failed; `rows` then holds the solved prefix.
    pub failure: Option<String>,
}

impl<T: Real> BlowupStudy<T> {
    pub fn csv(&self) -> String {
        let mut s = String::from("T,resonant_ratio,control_ratio\n");
        for r in &self.rows {
            s.push_str(&format!("{:e},{:e},{:e}\n", r.t.as_f64(), r.resonant_ratio.as_f64(), r.control_ratio.as_f64()));
        }
        s
    }

    /// Smallest per-doubling growth factor of the resonant ratio.
    pub fn min_growth(&self) -> Option<T> {
        self.rows
            .windows(2)
            .map(|w| growth_per_doubling(w[0].t, w[1].t, w[0].resonant_ratio, w[1].resonant_ratio))
            .reduce(T::min)
    }

    /// Largest `max(c_k/c₀, c₀/c_k)` of the control ratios.
    pub fn control_spread(&self) -> Option<T> {
        let first = self.rows.first()?.control_ratio;
        self.rows
            .iter()
            .map(|r| (r.control_ratio / first).max(first / r.control_ratio))
            .reduce(T::max)
    }
}

fn growth_per_doubling<T: Real>(t0: T, t1: T, r0: T, r1: T) -> T {
    let doublings = (t1 / t0).log2();
    (r1 / r0).powf(T::one() / doublings)
}

pub const GROWTH_FACTOR: f64 = 1.5;
pub const CONTROL_FACTOR: f64 = 2.0;

/// Blow-up verdict of a table: resonant growth at least 1.5 per doubling and
/// control within a factor 2 of its first value.
pub fn blowup_verdict<T: Real>(rows: &[BlowupRow<T>]) -> BlowupVerdict {
    if rows.len() < 2 {
        return BlowupVerdict::Inconclusive;
    }
    let grows = rows.windows(2).all(|w| {
        w[1].resonant_ratio > w[0].resonant_ratio
            && growth_per_doubling(w[0].t, w[1].t, w[0].resonant_ratio, w[1].resonant_ratio) >= T::lit(GROWTH_FACTOR)
    });
    let first = rows[0].control_ratio;
    let bounded = rows
        .iter()
        .all(|r| r.control_ratio <= T::lit(CONTROL_FACTOR) * first && r.control_ratio * T::lit(CONTROL_FACTOR) >= first);
    if grows && bounded {
        BlowupVerdict::Blowup
    } else {
        BlowupVerdict::NoBlowup
    }
}

/// Run the study for every half-width in `widths` (strictly increasing). The
/// resonant run uses `sp.b` and forcing at the symbol zero; the control run
/// uses `b` rescaled to `|b| = 0.5·L_max`. Case (i) uses the box `(−T, T)²`,
/// the others the strip `(0, strip_width) × (−T, T)`.
/// The `x1` extent used at half-width `t`: the strip, or `(−t, t)` in case (i).
pub fn study_geometry<T: Real>(case: CaseTag, t: T, h: T, strip_width: T) -> StripGeometry<T> {
    match case {
        CaseTag::I => StripGeometry {
            x1_lo: -t,
            x1_hi: t,
            h: T::lit(2.0) * t / (T::lit(2.0) * t / h).round(),
        },
        _ => StripGeometry::strip(strip_width, h),
    }
}

pub fn blowup_study<T: Real>(
    sp: &SymbolProblem<T>,
    widths: &[T],
    h: T,
    strip_width: T,
) -> Result<BlowupStudy<T>, CounterexampleError> {
    if sp.b.len() != 2 {
        return Err(CounterexampleError::Invalid("the study is implemented for d = 2".into()));
    }
    if widths.is_empty() || widths.windows(2).any(|w| w[1] <= w[0]) || widths[0] <= T::zero() {
        return Err(CounterexampleError::Invalid("widths must be positive and increasing".into()));
    }
    if !(h > T::zero()) {
        return Err(CounterexampleError::Invalid("h must be positive".into()));
    }
    let (zeta, xi) = sp.symbol_zero()?;
    let xi = xi[0];
    let scale = T::lit(0.5) * sp.lmax() / sp.r;
    let b_control: Vec<T> = sp.b.iter().map(|&c| c * scale).collect();
    let results: Vec<Result<BlowupRow<T>, CounterexampleError>> = widths
        .par_iter()
        .map(|&t| {
            let geom = study_geometry(sp.case, t, h, strip_width);
            let resonant = strip_response(&geom, t, &sp.b, sp.lambda1, sp.epsilon, zeta, xi)?;
            let control = strip_response(&geom, t, &b_control, sp.lambda1, sp.epsilon, zeta, xi)?;
            Ok(BlowupRow {
                t,
                resonant_ratio: resonant,
                control_ratio: control,
            })
        })
        .collect();
    let mut rows = Vec::new();
    let mut failure = None;
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        }
    }
    let verdict = if failure.is_some() && rows.len() < 2 {
        BlowupVerdict::Inconclusive
    } else {
        blowup_verdict(&rows)
    };
    Ok(BlowupStudy {
        rows,
        verdict,
        b: sp.b.clone(),
        b_control,
        zeta,
        xi,
        h,
        failure,
    })
}
