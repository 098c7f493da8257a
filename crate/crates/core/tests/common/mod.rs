//! Shared problem suite and independent dense oracles.
#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semicert::conditions::{lmax, SemilinearitySpec};
use semicert::discrete::Elliptic;
use semicert::domain::{build_domain, BoundingBox, DomainSpec};
use semicert::expr::{parse_expr, Point};
use semicert::semilinear::compute_lambda1;

pub struct Problem {
    pub name: &'static str,
    pub op: Elliptic<f64>,
    pub lambda1: f64,
    pub spec: SemilinearitySpec<f64>,
    /// `f` is affine in `(s, ξ)` with the data entering linearly.
    pub linear: bool,
}

pub struct Def {
    pub name: &'static str,
    pub domain: DomainSpec,
    pub bbox: (Vec<f64>, Vec<f64>),
    pub h: f64,
    pub f: &'static str,
    pub data: &'static str,
    pub h0: &'static str,
    pub gamma: &'static str,
    /// `ε/λ₁`.
    pub eps_ratio: f64,
    /// `L/L_max`.
    pub l_ratio: f64,
    pub q: f64,
    pub linear: bool,
}

pub fn interval(a: f64, b: f64, h: f64) -> Arc<semicert::domain::GridDomain<f64>> {
    Arc::new(build_domain(&DomainSpec::Interval { a, b }, h, &BoundingBox::new(vec![a], vec![b])).unwrap())
}

pub fn build(def: &Def) -> Problem {
    let bbox = BoundingBox::new(def.bbox.0.clone(), def.bbox.1.clone());
    let dom = build_domain(&def.domain, def.h, &bbox).unwrap();
    let dim = dom.dim();
    let op = Elliptic::dirichlet(Arc::new(dom));
    let lambda1 = compute_lambda1(&op).unwrap();
    problem_on(def, op, lambda1, dim)
}

pub fn problem_on(def: &Def, op: Elliptic<f64>, lambda1: f64, dim: usize) -> Problem {
    let eps = def.eps_ratio * lambda1;
    let l = def.l_ratio * lmax(eps, lambda1);
    let e = |t: &str| parse_expr(t, dim).unwrap();
    let spec = SemilinearitySpec::new(e(def.f), e(def.data), e(def.h0), e(def.gamma), eps, l, l, def.q, dim as f64).unwrap();
    Problem {
        name: def.name,
        op,
        lambda1,
        spec,
        linear: def.linear,
    }
}

fn unit_box(d: usize) -> (Vec<f64>, Vec<f64>) {
    (vec![0.0; d], vec![1.0; d])
}

/// The ten-problem regression suite.
pub fn suite_defs() -> Vec<Def> {
    let sq = DomainSpec::Box {
        lo: vec![0.0, 0.0],
        hi: vec![1.0, 1.0],
    };
    vec![
        Def {
            name: "cubic_interval",
            domain: DomainSpec::Interval { a: 0.0, b: 1.0 },
            bbox: unit_box(1),
            h: 1.0 / 16.0,
            f: "-s^3 + 1",
            data: "1",
            h0: "1",
            gamma: "s^3",
            eps_ratio: 1.0,
            l_ratio: 0.0,
            q: 4.0,
            linear: false,
        },
        Def {
            name: "linear_interval",
            domain: DomainSpec::Interval { a: 0.0, b: 1.0 },
            bbox: unit_box(1),
            h: 1.0 / 16.0,
            f: "(lambda1 - eps)*s + 1 + x1",
            data: "1 + x1",
            h0: "1 + x1",
            gamma: "(lambda1 - eps)*s",
            eps_ratio: 0.5,
            l_ratio: 0.0,
            q: 2.0,
            linear: true,
        },
        Def {
            name: "gradient_interval",
            domain: DomainSpec::Interval { a: 0.0, b: 1.0 },
            bbox: unit_box(1),
            h: 1.0 / 16.0,
            f: "0.5*Lmax*xi1 + 1 - s",
            data: "1",
            h0: "1",
            gamma: "s",
            eps_ratio: 0.5,
            l_ratio: 0.5,
            q: 2.0,
            linear: false,
        },
        Def {
            name: "sine_interval",
            domain: DomainSpec::Interval { a: 0.0, b: 1.0 },
            bbox: unit_box(1),
            h: 1.0 / 32.0,
            f: "sin(s) + 2 - x1",
            data: "2 - x1",
            h0: "2 - x1",
            gamma: "s",
            eps_ratio: 0.5,
            l_ratio: 0.0,
            q: 2.0,
            linear: false,
        },
        Def {
            name: "cubic_square",
            domain: sq.clone(),
            bbox: unit_box(2),
            h: 1.0 / 8.0,
            f: "-s^3 + 1",
            data: "1",
            h0: "1",
            gamma: "s^3",
            eps_ratio: 1.0,
            l_ratio: 0.0,
            q: 4.0,
            linear: false,
        },
        Def {
            name: "gradient_square",
            domain: sq,
            bbox: unit_box(2),
            h: 1.0 / 8.0,
            f: "0.3*Lmax*gnorm - s + x1*x2",
            data: "x1*x2",
            h0: "x1*x2",
            gamma: "s",
            eps_ratio: 0.5,
            l_ratio: 0.3,
            q: 2.0,
            linear: false,
        },
        Def {
            name: "absorbing_disk",
            domain: DomainSpec::Disk {
                center: vec![0.5, 0.5],
                radius: 0.5,
            },
            bbox: unit_box(2),
            h: 0.1,
            f: "-s*abs(s) + 1",
            data: "1",
            h0: "1",
            gamma: "s^2",
            eps_ratio: 1.0,
            l_ratio: 0.0,
            q: 3.0,
            linear: false,
        },
        Def {
            name: "gradient_lshape",
            domain: DomainSpec::LShape {
                lo: vec![0.0, 0.0],
                hi: vec![1.0, 1.0],
            },
            bbox: unit_box(2),
            h: 1.0 / 8.0,
            f: "-s^3 + 0.5*Lmax*xi2 + 1",
            data: "1",
            h0: "1",
            gamma: "s^3",
            eps_ratio: 1.0,
            l_ratio: 0.5,
            q: 4.0,
            linear: false,
        },
        Def {
            name: "linear_annulus",
            domain: DomainSpec::Annulus {
                center: vec![0.0, 0.0],
                inner: 0.3,
                outer: 1.0,
            },
            bbox: (vec![-1.0, -1.0], vec![1.0, 1.0]),
            h: 0.125,
            f: "(lambda1 - eps)*s + 1",
            data: "1",
            h0: "1",
            gamma: "(lambda1 - eps)*s",
            eps_ratio: 0.6,
            l_ratio: 0.0,
            q: 2.0,
            linear: true,
        },
        Def {
            name: "union_boxes",
            domain: DomainSpec::UnionOfBoxes(vec![
                (vec![0.0, 0.0], vec![1.0, 0.5]),
                (vec![0.25, 0.0], vec![0.75, 1.0]),
            ]),
            bbox: unit_box(2),
            h: 1.0 / 8.0,
            f: "-s^3 - s + 1 + 0.2*Lmax*xi1",
            data: "1",
            h0: "1",
            gamma: "s^3 + s",
            eps_ratio: 0.8,
            l_ratio: 0.2,
            q: 4.0,
            linear: false,
        },
    ]
}

pub fn suite() -> Vec<Problem> {
    suite_defs().iter().map(build).collect()
}

/// One-dimensional semilinearities for the dense Newton comparison.
pub fn oracle_defs() -> Vec<Def> {
    let iv = |name, h: f64, b: f64, f, data, h0, gamma, eps_ratio, l_ratio| Def {
        name,
        domain: DomainSpec::Interval { a: 0.0, b },
        bbox: (vec![0.0], vec![b]),
        h,
        f,
        data,
        h0,
        gamma,
        eps_ratio,
        l_ratio,
        q: 2.0,
        linear: false,
    };
    vec![
        iv("cubic", 1.0 / 16.0, 1.0, "-s^3 + 1", "1", "1", "s^3", 1.0, 0.0),
        iv("linear", 1.0 / 16.0, 1.0, "(lambda1 - eps)*s + 1 + x1", "1 + x1", "1 + x1", "(lambda1 - eps)*s", 0.5, 0.0),
        iv("gradient", 1.0 / 32.0, 1.0, "0.5*Lmax*xi1 + 1 - s", "1", "1", "s", 0.5, 0.5),
        iv("sine", 1.0 / 32.0, 1.0, "sin(s) + 2 - x1", "2 - x1", "2 - x1", "s", 0.5, 0.0),
        iv("cubic_gnorm", 1.0 / 32.0, 1.0, "-s^3 + 0.5*Lmax*gnorm + x1", "x1", "x1", "s^3", 1.0, 0.5),
        iv("saturating", 1.0 / 32.0, 1.0, "-s/sqrt(1 + s^2) - s + 2", "3", "2", "s + 1", 1.0, 0.0),
        iv(
            "resonant_part",
            1.0 / 32.0,
            1.0,
            "(lambda1 - eps)*s - s^3 + sin(3*x1)",
            "1",
            "1",
            "(lambda1 - eps)*s + s^3",
            0.5,
            0.0,
        ),
        iv("quintic_long", 1.0 / 32.0, 2.0, "-s^5 + 1", "1", "1", "s^5", 1.0, 0.0),
        iv("abs_gradient", 1.0 / 16.0, 1.0, "0.4*Lmax*abs(xi1) - s + 1", "1", "1", "s", 0.5, 0.4),
        iv("cosine", 1.0 / 32.0, 1.0, "-s + cos(s) + 1", "2", "2", "s", 1.0, 0.0),
    ]
}

/// Dense Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let m = a[i][k] / a[k][k];
            if m != 0.0 {
                for j in k..n {
                    a[i][j] -= m * a[k][j];
                }
                b[i] -= m * b[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x
}

/// Uniform 1D Dirichlet grid `a + h, …, b − h` with the matching
/// tridiagonal second difference and forward gradient.
pub struct Grid1d {
    pub h: f64,
    pub x: Vec<f64>,
}

impl Grid1d {
    pub fn new(a: f64, b: f64, h: f64) -> Self {
        let n = ((b - a) / h).round() as usize - 1;
        Grid1d {
            h,
            x: (1..=n).map(|i| a + i as f64 * h).collect(),
        }
    }

    pub fn lap(&self, u: &[f64]) -> Vec<f64> {
        let n = u.len();
        let h2 = self.h * self.h;
        (0..n)
            .map(|i| {
                let l = if i > 0 { u[i - 1] } else { 0.0 };
                let r = if i + 1 < n { u[i + 1] } else { 0.0 };
                (2.0 * u[i] - l - r) / h2
            })
            .collect()
    }

    pub fn grad(&self, u: &[f64]) -> Vec<f64> {
        let n = u.len();
        (0..n)
            .map(|i| (if i + 1 < n { u[i + 1] } else { 0.0 } - u[i]) / self.h)
            .collect()
    }

    /// `h·Σ(Δu)²` over all `n + 1` cell edges.
    pub fn energy(&self, u: &[f64]) -> f64 {
        let n = u.len();
        let mut s = 0.0;
        for i in 0..=n {
            let l = if i > 0 { u[i - 1] } else { 0.0 };
            let r = if i < n { u[i] } else { 0.0 };
            s += (r - l) * (r - l);
        }
        s / self.h
    }

    pub fn l2(&self, u: &[f64]) -> f64 {
        (u.iter().map(|v| v * v).sum::<f64>() * self.h).sqrt()
    }
}

/// Newton's method with a finite-difference Jacobian on `Lap u = f(x, u, ∇u)`.
pub fn newton_oracle(grid: &Grid1d, f: &semicert::expr::Expr) -> Vec<f64> {
    let n = grid.x.len();
    let residual = |u: &[f64]| -> Vec<f64> {
        let lap = grid.lap(u);
        let g = grid.grad(u);
        (0..n)
            .map(|i| lap[i] - f.eval(&Point::new(&[grid.x[i]], u[i], &[g[i]])).unwrap())
            .collect()
    };
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut u = vec![0.0; n];
    let mut r = residual(&u);
    for _ in 0..100 {
        if norm(&r) < 1e-12 {
            break;
        }
        let mut jac = vec![vec![0.0; n]; n];
        for j in 0..n {
            let step = 1e-7 * (1.0 + u[j].abs());
            let mut up = u.clone();
            up[j] += step;
            let mut um = u.clone();
            um[j] -= step;
            let (rp, rm) = (residual(&up), residual(&um));
            for i in 0..n {
                jac[i][j] = (rp[i] - rm[i]) / (2.0 * step);
            }
        }
        let d = dense_solve(jac, r.iter().map(|v| -v).collect());
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let rc = residual(&cand);
            if norm(&rc) < norm(&r) || t < 1e-6 {
                u = cand;
                r = rc;
                break;
            }
            t /= 2.0;
        }
    }
    assert!(norm(&r) < 1e-8, "newton oracle did not converge: {}", norm(&r));
    u
}

/// Largest `‖u‖_{H¹}` over all `u` satisfying the energy inequality
/// `E(u) ≤ (λ₁ − ε)‖u‖² + L⟨|∇u|, |u|⟩ + ⟨h, |u|⟩` for some `h ≥ 0` with
/// `‖h‖₂ = 1`, found by projected gradient ascent on the `H¹` sphere.
///
/// For fixed `u` the best `h` is `|u|/‖u‖`, so the feasible radius along a
/// unit direction `w` is `‖w‖₂/Q(w)` with
/// `Q(w) = E(w) − (λ₁ − ε)‖w‖² − L⟨|∇w|, |w|⟩`.
pub fn worst_case_h1(grid: &Grid1d, lambda1: f64, eps: f64, l: f64, starts: usize, seed: u64) -> f64 {
    let n = grid.x.len();
    let h1 = |w: &[f64]| (grid.energy(w) + grid.l2(w).powi(2)).sqrt();
    let radius = |w: &[f64]| -> f64 {
        let g = grid.grad(w);
        let cross: f64 = g.iter().zip(w).map(|(a, b)| (a * b).abs()).sum::<f64>() * grid.h;
        let q = grid.energy(w) - (lambda1 - eps) * grid.l2(w).powi(2) - l * cross;
        let nrm = h1(w);
        // Both numerator and Q scale with |w|; normalise to the unit sphere.
        (grid.l2(w) / nrm) / (q / (nrm * nrm))
    };
    let normalize = |w: Vec<f64>| {
        let s = h1(&w);
        w.into_iter().map(|v| v / s).collect::<Vec<_>>()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for k in 0..starts {
        let mut w: Vec<f64> = if k == 0 {
            grid.x.iter().map(|&x| (std::f64::consts::PI * (x - grid.x[0] + grid.h) / (grid.h * (n + 1) as f64)).sin()).collect()
        } else {
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        w = normalize(w);
        let mut val = radius(&w);
        let mut step = 0.1;
        for _ in 0..400 {
            let mut grad = vec![0.0; n];
            for j in 0..n {
                let mut wp = w.clone();
                wp[j] += 1e-7;
                let mut wm = w.clone();
                wm[j] -= 1e-7;
                grad[j] = (radius(&wp) - radius(&wm)) / 2e-7;
            }
            let gn = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gn < 1e-12 {
                break;
            }
            loop {
                let cand = normalize(w.iter().zip(&grad).map(|(a, g)| a + step * g / gn).collect());
                let cv = radius(&cand);
                if cv > val {
                    w = cand;
                    val = cv;
                    step *= 1.5;
                    break;
                }
                step /= 2.0;
                if step < 1e-12 {
                    break;
                }
            }
            if step < 1e-12 {
                break;
            }
        }
        best = best.max(val);
    }
    best
}
