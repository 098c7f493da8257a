use crate::scalar::Real;

use super::field::dot;
use super::sparse::SparseOperator;
use super::SolveError;

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    /// Achieved `‖A x - b‖ / ‖b‖` (zero for `b = 0`).
    pub relative_residual: T,
}

/// Default iteration cap for an `n`-dimensional system.
pub fn default_max_iter(n: usize) -> usize {
    (20 * n).max(200)
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive
/// definite operator, started from `x0` (zero if `None`).
///
/// All reductions run sequentially in index order so the result is
/// bit-reproducible. The returned residual is recomputed from scratch.
pub fn conjugate_gradient<T: Real>(
    a: &SparseOperator<T>,
    b: &[T],
    x0: Option<&[T]>,
    tol: T,
    max_iter: usize,
) -> Result<CgOutcome<T>, SolveError> {
    let (out, converged) = cg_core(a, b, x0, tol, max_iter)?;
    if converged {
        Ok(out)
    } else {
        Err(SolveError::MaxIterations {
            iterations: out.iterations,
            residual: out.relative_residual.as_f64(),
        })
    }
}

/// CG that hands back the last iterate when the cap is hit; the flag reports
/// whether `tol` was reached.
pub(crate) fn cg_core<T: Real>(
    a: &SparseOperator<T>,
    b: &[T],
    x0: Option<&[T]>,
    tol: T,
    max_iter: usize,
) -> Result<(CgOutcome<T>, bool), SolveError> {
    let n = a.dim();
    if b.len() != n || x0.is_some_and(|x| x.len() != n) {
        return Err(SolveError::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let b_norm = dot(b, b).sqrt();
    if b_norm == T::zero() {
        return Ok((
            CgOutcome {
                x: vec![T::zero(); n],
                iterations: 0,
                relative_residual: T::zero(),
            },
            true,
        ));
    }
    let inv_diag: Vec<T> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > T::zero() { T::one() / d } else { T::one() })
        .collect();
    let mut x = x0.map_or_else(|| vec![T::zero(); n], <[T]>::to_vec);
    let mut r = a.apply(&x);
    for (ri, &bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let target = tol * b_norm;
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];
    let mut iterations = 0;
    while dot(&r, &r).sqrt() > target {
        if iterations >= max_iter {
            let rel = true_residual(a, &x, b) / b_norm;
            if rel <= tol {
                break;
            }
            let out = CgOutcome {
                x,
                iterations,
                relative_residual: rel,
            };
            return Ok((out, false));
        }
        a.apply_into(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > T::zero()) {
            return Err(SolveError::NotPositiveDefinite {
                iteration: iterations,
                curvature: curvature.as_f64(),
            });
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        iterations += 1;
        // Guard against drift of the recursive residual.
        if dot(&r, &r).sqrt() <= target {
            let actual = true_residual(a, &x, b);
            if actual > target {
                r = a.apply(&x);
                for (ri, &bi) in r.iter_mut().zip(b) {
                    *ri = bi - *ri;
                }
                z = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
                p = z.clone();
                rz = dot(&r, &z);
            }
        }
    }
    let relative_residual = true_residual(a, &x, b) / b_norm;
    Ok((
        CgOutcome {
            x,
            iterations,
            relative_residual,
        },
        true,
    ))
}

fn true_residual<T: Real>(a: &SparseOperator<T>, x: &[T], b: &[T]) -> T {
    let ax = a.apply(x);
    let mut s = T::zero();
    for (&axi, &bi) in ax.iter().zip(b) {
        s += (bi - axi) * (bi - axi);
    }
    s.sqrt()
}

/// Restarted GMRES for a matrix-free operator, started from zero.
///
/// Returns the iterate, the achieved relative residual and the number of
/// operator applications. Does not fail on non-convergence; the caller
/// inspects the residual.
pub fn gmres<T: Real>(apply: impl Fn(&[T]) -> Vec<T>, b: &[T], tol: T, restart: usize, max_iter: usize) -> (Vec<T>, T, usize) {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![T::zero(); n];
    if b_norm == T::zero() {
        return (x, T::zero(), 0);
    }
    let m = restart.max(1).min(n.max(1));
    let mut applications = 0;
    let mut rel = T::one();
    while applications < max_iter {
        let ax = apply(&x);
        applications += 1;
        let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
        let beta = dot(&r, &r).sqrt();
        rel = beta / b_norm;
        if rel <= tol {
            break;
        }
        let mut basis: Vec<Vec<T>> = vec![r.iter().map(|&v| v / beta).collect()];
        let mut hess: Vec<Vec<T>> = Vec::new();
        let mut cs: Vec<T> = Vec::new();
        let mut sn: Vec<T> = Vec::new();
        let mut g = vec![T::zero(); m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m && applications < max_iter {
            let mut w = apply(&basis[k]);
            applications += 1;
            let mut col = vec![T::zero(); k + 2];
            for (j, vj) in basis.iter().enumerate() {
                let hij = dot(&w, vj);
                col[j] = hij;
                for (wi, &vi) in w.iter_mut().zip(vj) {
                    *wi -= hij * vi;
                }
            }
            let wn = dot(&w, &w).sqrt();
            col[k + 1] = wn;
            for j in 0..k {
                let t = cs[j] * col[j] + sn[j] * col[j + 1];
                col[j + 1] = -sn[j] * col[j] + cs[j] * col[j + 1];
                col[j] = t;
            }
            let denom = (col[k] * col[k] + col[k + 1] * col[k + 1]).sqrt();
            let (c, s) = if denom == T::zero() {
                (T::one(), T::zero())
            } else {
                (col[k] / denom, col[k + 1] / denom)
            };
            cs.push(c);
            sn.push(s);
            col[k] = c * col[k] + s * col[k + 1];
            col[k + 1] = T::zero();
            g[k + 1] = -s * g[k];
            g[k] = c * g[k];
            hess.push(col);
            k += 1;
            if (g[k].abs() / b_norm) <= tol || wn == T::zero() {
                break;
            }
            basis.push(w.into_iter().map(|v| v / wn).collect());
        }
        // Back substitution on the k×k triangle.
        let mut y = vec![T::zero(); k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for j in i + 1..k {
                acc -= hess[j][i] * y[j];
            }
            y[i] = if hess[i][i] == T::zero() { T::zero() } else { acc / hess[i][i] };
        }
        for (j, &yj) in y.iter().enumerate() {
            for (xi, &vi) in x.iter_mut().zip(&basis[j]) {
                *xi += yj * vi;
            }
        }
        rel = g[k].abs() / b_norm;
        if rel <= tol {
            let ax = apply(&x);
            applications += 1;
            let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
            rel = dot(&r, &r).sqrt() / b_norm;
            if rel <= tol {
                break;
            }
        }
    }
    (x, rel, applications)
}
