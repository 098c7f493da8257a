use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::domain::GridDomain;
use crate::expr::{Expr, Point};
use crate::scalar::Real;

use super::{q_double_star, ConditionError, SemilinearitySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConditionKind {
    Coercive,
    Growth,
    Monotone,
    Gamma0,
    GammaInf,
}

impl fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConditionKind::Coercive => "coercive",
            ConditionKind::Growth => "growth",
            ConditionKind::Monotone => "monotone",
            ConditionKind::Gamma0 => "gamma0",
            ConditionKind::GammaInf => "gammaInf",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FalsifyOptions<T> {
    pub seed: u64,
    /// Upper bound for the sampled `γ` ratios.
    pub gamma_cap: T,
    /// Number of chunks the sample range is split into; the verdict does not
    /// depend on it.
    pub shards: usize,
}

impl<T: Real> Default for FalsifyOptions<T> {
    fn default() -> Self {
        FalsifyOptions {
            seed: 0x5eed,
            gamma_cap: T::lit(1e8),
            shards: rayon::current_num_threads().max(1),
        }
    }
}

/// A sample at which the inequality fails by more than the slack.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness<T> {
    pub index: usize,
    pub x: Vec<T>,
    /// One state value, or two for the monotonicity condition.
    pub s: Vec<T>,
    pub xi: Vec<Vec<T>>,
    pub lhs: T,
    pub rhs: T,
    pub slack: T,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict<T> {
    Pass { samples: usize },
    Witness(Witness<T>),
    Skipped(String),
}

impl<T> Verdict<T> {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Pass { .. } => "PASS",
            Verdict::Witness(_) => "WITNESS",
            Verdict::Skipped(_) => "SKIPPED",
        }
    }
}

const SLACK: f64 = 1e-9;
const GRID_POINTS: usize = 41;

/// `n` log-spaced points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
}

/// `0` and `±[1e-6, 1e6]` log-spaced.
fn signed_grid() -> Vec<f64> {
    let g = log_grid(1e-6, 1e6, GRID_POINTS);
    std::iter::once(0.0).chain(g.iter().map(|v| -v)).chain(g.iter().copied()).collect()
}

/// `0` and `[1e-6, 1e6]` log-spaced.
fn magnitude_grid() -> Vec<f64> {
    std::iter::once(0.0).chain(log_grid(1e-6, 1e6, GRID_POINTS)).collect()
}

/// Largest value of `γ(s)/s^p` over `s`, with the sample attaining it.
pub fn gamma_ratio_sup<T: Real>(gamma: &Expr, samples: &[f64], p: T) -> Result<(T, T), ConditionError> {
    let origin = vec![T::zero(); gamma.dim()];
    let mut best = (T::neg_infinity(), T::zero());
    for &s in samples {
        let s = T::lit(s);
        let g = gamma.eval(&Point::at(&origin, s)).map_err(|source| ConditionError::Eval {
            condition: ConditionKind::Gamma0,
            x: vec![],
            s: s.as_f64(),
            source,
        })?;
        let r = g / s.powf(p);
        if r > best.0 {
            best = (r, s);
        }
    }
    Ok(best)
}

/// Search for a violation of `kind` by sampling.
///
/// Each sample draws from its own ChaCha stream (`seed`, stream = sample
/// index), and the reported witness is the one with the smallest index, so
/// the verdict is independent of the shard count. Samples are taken over the
/// domain nodes, `s` on `0 ∪ ±[1e-6, 1e6]` (41 log-spaced magnitudes) crossed
/// with `|ξ|` on `0 ∪ [1e-6, 1e6]`, then `budget` random draws.
pub fn falsify_condition<T: Real>(
    kind: ConditionKind,
    spec: &SemilinearitySpec<T>,
    dom: &GridDomain<T>,
    lambda1: T,
    budget: usize,
    opts: &FalsifyOptions<T>,
) -> Result<Verdict<T>, ConditionError> {
    let spec = spec.bind_params(lambda1);
    match kind {
        ConditionKind::Gamma0 => {
            if dom.measure().is_finite() {
                return Ok(Verdict::Skipped("domain has finite measure".into()));
            }
            gamma_verdict(&spec, &log_grid(1e-8, 1e-2, GRID_POINTS), T::one(), opts.gamma_cap)
        }
        ConditionKind::GammaInf => {
            let qss = q_double_star(spec.q, spec.d_hat)?;
            if !qss.is_finite() {
                return Ok(Verdict::Skipped("q > d_hat/2, growth of gamma is unrestricted".into()));
            }
            gamma_verdict(&spec, &log_grid(1e2, 1e8, GRID_POINTS), qss / T::lit(2.0), opts.gamma_cap)
        }
        _ => {
            let structured = match kind {
                ConditionKind::Monotone => signed_grid().len().pow(2),
                _ => signed_grid().len() * magnitude_grid().len(),
            };
            let sampler = Sampler {
                kind,
                spec: &spec,
                dom,
                lambda1,
                seed: opts.seed,
                s_grid: signed_grid(),
                m_grid: magnitude_grid(),
                structured,
            };
            let total = structured + budget;
            let shards = opts.shards.max(1);
            let chunk = total.div_ceil(shards);
            let found = (0..shards)
                .into_par_iter()
                .map(|c| {
                    let lo = (c * chunk).min(total);
                    let hi = ((c + 1) * chunk).min(total);
                    (lo..hi).find_map(|i| match sampler.sample(i) {
                        Ok(None) => None,
                        other => Some(other),
                    })
                })
                .collect::<Vec<_>>()
                .into_iter()
                .flatten()
                .next();
            match found {
                None => Ok(Verdict::Pass { samples: total }),
                Some(Ok(Some(w))) => Ok(Verdict::Witness(w)),
                Some(Ok(None)) => unreachable!(),
                Some(Err(e)) => Err(e),
            }
        }
    }
}

fn gamma_verdict<T: Real>(spec: &SemilinearitySpec<T>, samples: &[f64], p: T, cap: T) -> Result<Verdict<T>, ConditionError> {
    let (sup, at) = gamma_ratio_sup(&spec.gamma, samples, p)?;
    if sup > cap {
        Ok(Verdict::Witness(Witness {
            index: 0,
            x: vec![],
            s: vec![at],
            xi: vec![],
            lhs: sup,
            rhs: cap,
            slack: T::zero(),
        }))
    } else {
        Ok(Verdict::Pass { samples: samples.len() })
    }
}

struct Sampler<'a, T> {
    kind: ConditionKind,
    spec: &'a SemilinearitySpec<T>,
    dom: &'a GridDomain<T>,
    lambda1: T,
    seed: u64,
    s_grid: Vec<f64>,
    m_grid: Vec<f64>,
    structured: usize,
}

impl<T: Real> Sampler<'_, T> {
    fn rng(&self, i: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(i as u64);
        rng
    }

    fn direction(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let d = self.dom.dim();
        loop {
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if n > 1e-3 && n <= 1.0 {
                return v.into_iter().map(|a| a / n).collect();
            }
        }
    }

    fn log_uniform(rng: &mut ChaCha8Rng) -> f64 {
        10f64.powf(rng.gen_range(-6.0..6.0))
    }

    fn signed(rng: &mut ChaCha8Rng) -> f64 {
        let m = Self::log_uniform(rng);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    }

    fn vector(&self, rng: &mut ChaCha8Rng, magnitude: f64) -> Vec<T> {
        self.direction(rng).into_iter().map(|a| T::lit(a * magnitude)).collect()
    }

    fn eval_f(&self, x: &[T], s: T, xi: &[T]) -> Result<T, ConditionError> {
        self.spec.f.eval(&Point::new(x, s, xi)).map_err(|source| self.error(x, s, source))
    }

    fn eval_x(&self, e: &Expr, x: &[T]) -> Result<T, ConditionError> {
        e.eval(&Point::at(x, T::zero())).map_err(|source| self.error(x, T::zero(), source))
    }

    fn error(&self, x: &[T], s: T, source: crate::expr::ExprError) -> ConditionError {
        ConditionError::Eval {
            condition: self.kind,
            x: x.iter().map(|v| v.as_f64()).collect(),
            s: s.as_f64(),
            source,
        }
    }

    fn sample(&self, i: usize) -> Result<Option<Witness<T>>, ConditionError> {
        let mut rng = self.rng(i);
        let node = rng.gen_range(0..self.dom.len());
        let x = self.dom.coords(node);
        match self.kind {
            ConditionKind::Monotone => self.monotone(i, &mut rng, x),
            _ => {
                let (s, xi) = if i < self.structured {
                    let (si, mi) = (i / self.m_grid.len(), i % self.m_grid.len());
                    (self.s_grid[si], self.vector(&mut rng, self.m_grid[mi]))
                } else {
                    let s = Self::signed(&mut rng);
                    let m = if rng.gen_bool(0.9) { Self::log_uniform(&mut rng) } else { 0.0 };
                    (s, self.vector(&mut rng, m))
                };
                self.one_sided(i, x, T::lit(s), xi)
            }
        }
    }

    fn one_sided(&self, i: usize, x: &[T], s: T, xi: Vec<T>) -> Result<Option<Witness<T>>, ConditionError> {
        let spec = self.spec;
        let f = self.eval_f(x, s, &xi)?;
        let gnorm = norm(&xi);
        let lhs = f * s;
        let (rhs, scale, violated) = match self.kind {
            ConditionKind::Coercive => {
                let h = self.eval_x(&spec.h, x)?;
                let terms = [(self.lambda1 - spec.epsilon) * s * s, spec.l * gnorm * s.abs(), h * s.abs()];
                let rhs = terms[0] + terms[1] + terms[2];
                let scale = lhs.abs() + terms.iter().map(|t| t.abs()).sum::<T>();
                (rhs, scale, lhs - rhs)
            }
            _ => {
                let h0 = self.eval_x(&spec.h0, x)?;
                let abs_s = s.abs();
                let g = spec
                    .gamma
                    .eval(&Point::at(x, abs_s))
                    .map_err(|source| self.error(x, abs_s, source))?;
                let terms = [-g * abs_s, -spec.l0 * gnorm * abs_s, -h0 * abs_s];
                let rhs = terms[0] + terms[1] + terms[2];
                let scale = lhs.abs() + terms.iter().map(|t| t.abs()).sum::<T>();
                (rhs, scale, rhs - lhs)
            }
        };
        let slack = T::lit(SLACK) * scale;
        Ok((violated > slack).then(|| Witness {
            index: i,
            x: x.to_vec(),
            s: vec![s],
            xi: vec![xi],
            lhs,
            rhs,
            slack,
        }))
    }

    fn monotone(&self, i: usize, rng: &mut ChaCha8Rng, x: &[T]) -> Result<Option<Witness<T>>, ConditionError> {
        let (s1, s2, xi1, xi2) = if i < self.structured {
            let n = self.s_grid.len();
            let m = self.m_grid[i % self.m_grid.len()];
            let xi = self.vector(rng, m);
            (self.s_grid[i / n], self.s_grid[i % n], xi.clone(), xi)
        } else {
            let s1 = Self::signed(rng);
            let s2 = if rng.gen_bool(0.5) { s1 + Self::signed(rng) } else { Self::signed(rng) };
            let m = if rng.gen_bool(0.9) { Self::log_uniform(rng) } else { 0.0 };
            let xi1 = self.vector(rng, m);
            let xi2 = if rng.gen_bool(0.5) {
                let dm = Self::log_uniform(rng);
                xi1.iter().zip(self.vector(rng, dm)).map(|(&a, b)| a + b).collect()
            } else {
                xi1.clone()
            };
            (s1, s2, xi1, xi2)
        };
        let (s1, s2) = (T::lit(s1), T::lit(s2));
        let f1 = self.eval_f(x, s1, &xi1)?;
        let f2 = self.eval_f(x, s2, &xi2)?;
        let ds = s2 - s1;
        let dxi: Vec<T> = xi2.iter().zip(&xi1).map(|(&a, &b)| a - b).collect();
        let lhs = (f2 - f1) * ds;
        let t0 = (self.lambda1 - self.spec.epsilon) * ds * ds;
        let t1 = self.spec.l * norm(&dxi) * ds.abs();
        let rhs = t0 + t1;
        let scale = (f1.abs() + f2.abs()) * ds.abs() + t0.abs() + t1;
        let slack = T::lit(SLACK) * scale;
        Ok((lhs - rhs > slack).then(|| Witness {
            index: i,
            x: x.to_vec(),
            s: vec![s1, s2],
            xi: vec![xi1, xi2],
            lhs,
            rhs,
            slack,
        }))
    }
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &b| a + b * b).sqrt()
}
