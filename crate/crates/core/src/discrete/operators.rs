use std::sync::Arc;

use crate::domain::GridDomain;
use crate::expr::{Expr, Point};
use crate::scalar::Real;

use super::field::Field;
use super::sparse::SparseOperator;
use super::DiscreteError;

/// Standard `(2d+1)`-point Dirichlet Laplacian: `2d/h²` on the diagonal and
/// `-1/h²` between neighbouring nodes of the set.
pub fn assemble_dirichlet_laplacian<T: Real>(dom: &GridDomain<T>) -> SparseOperator<T> {
    let inv_h2 = T::one() / (dom.h() * dom.h());
    let diag = T::from_usize_lossy(2 * dom.dim()) * inv_h2;
    let mut t = Vec::with_capacity(dom.len() * (2 * dom.dim() + 1));
    for node in 0..dom.len() {
        t.push((node, node, diag));
        for axis in 0..dom.dim() {
            for dir in [-1i8, 1] {
                if let Some(nb) = dom.neighbor(node, axis, dir) {
                    t.push((node, nb, -inv_h2));
                }
            }
        }
    }
    SparseOperator::from_triplets(dom.len(), &t, true)
}

/// Robin form on `dom.robin_closure()`: Neumann stiffness over the edges of
/// the closed node set plus the lumped boundary mass `β(face)·h^(d-1)/h^d` on
/// every face of that set.
pub fn assemble_robin_form<T: Real>(dom: &GridDomain<T>, beta: &Expr) -> Result<SparseOperator<T>, DiscreteError> {
    let closure = dom.robin_closure();
    robin_on_closure(&closure, beta)
}

pub(crate) fn robin_on_closure<T: Real>(closure: &GridDomain<T>, beta: &Expr) -> Result<SparseOperator<T>, DiscreteError> {
    let inv_h2 = T::one() / (closure.h() * closure.h());
    let mass_scale = closure.face_area() / closure.cell_volume();
    let mut t = Vec::new();
    for node in 0..closure.len() {
        let mut degree = 0usize;
        for axis in 0..closure.dim() {
            for dir in [-1i8, 1] {
                if let Some(nb) = closure.neighbor(node, axis, dir) {
                    t.push((node, nb, -inv_h2));
                    degree += 1;
                }
            }
        }
        t.push((node, node, T::from_usize_lossy(degree) * inv_h2));
    }
    for face in closure.faces() {
        let mid = closure.face_midpoint(face);
        let b: T = beta.eval(&Point::at(&mid, T::zero())).map_err(|source| DiscreteError::Expr {
            at: mid.iter().map(|v| v.as_f64()).collect(),
            source,
        })?;
        if b < T::zero() {
            return Err(DiscreteError::NegativeBeta {
                at: mid.iter().map(|v| v.as_f64()).collect(),
                value: b.as_f64(),
            });
        }
        t.push((face.node, face.node, b * mass_scale));
    }
    Ok(SparseOperator::from_triplets(closure.len(), &t, true))
}

/// Forward-difference gradient `(u(x + h e_i) - u(x))/h` with exterior values
/// taken as zero (Dirichlet). Returns a `d`-component field.
pub fn apply_gradient<T: Real>(dom: &Arc<GridDomain<T>>, u: &Field<T>) -> Field<T> {
    forward_gradient(dom, u, true)
}

fn forward_gradient<T: Real>(dom: &Arc<GridDomain<T>>, u: &Field<T>, zero_exterior: bool) -> Field<T> {
    assert_eq!(u.components(), 1);
    let d = dom.dim();
    let h = dom.h();
    let uv = u.values();
    let mut out = vec![T::zero(); d * dom.len()];
    for node in 0..dom.len() {
        for axis in 0..d {
            out[node * d + axis] = match dom.neighbor(node, axis, 1) {
                Some(nb) => (uv[nb] - uv[node]) / h,
                None if zero_exterior => -uv[node] / h,
                None => T::zero(),
            };
        }
    }
    Field::from_values(dom, d, out)
}

/// Differences across every edge of the node set and every Dirichlet boundary
/// face, scaled by `1/h`. Their `h^d`-weighted squared sum is `⟨Lap u, u⟩`.
pub fn edge_gradient<T: Real>(dom: &GridDomain<T>, u: &[T]) -> Vec<T> {
    let h = dom.h();
    let mut out = Vec::new();
    for node in 0..dom.len() {
        for axis in 0..dom.dim() {
            match dom.neighbor(node, axis, 1) {
                Some(nb) => out.push((u[nb] - u[node]) / h),
                None => out.push(-u[node] / h),
            }
            if dom.neighbor(node, axis, -1).is_none() {
                out.push(u[node] / h);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Dirichlet,
    Robin,
}

/// The stiffness operator together with the matching node gradient.
///
/// In Dirichlet mode the unknowns are the domain nodes and the gradient
/// extends by zero. In Robin mode the unknowns are the Robin closure and the
/// gradient uses only edges inside the set. In both cases the pointwise
/// gradient satisfies `‖∇u‖² ≤ ⟨A u, u⟩`, which is what the contraction and
/// a priori estimates rely on.
#[derive(Debug, Clone)]
pub struct Elliptic<T> {
    domain: Arc<GridDomain<T>>,
    stiffness: SparseOperator<T>,
    kind: BoundaryKind,
}

impl<T: Real> Elliptic<T> {
    pub fn dirichlet(domain: Arc<GridDomain<T>>) -> Self {
        let stiffness = assemble_dirichlet_laplacian(&domain);
        Elliptic {
            domain,
            stiffness,
            kind: BoundaryKind::Dirichlet,
        }
    }

    /// Robin form on the closure of `domain`.
    pub fn robin(domain: &GridDomain<T>, beta: &Expr) -> Result<Self, DiscreteError> {
        let closure = domain.robin_closure();
        let stiffness = robin_on_closure(&closure, beta)?;
        Ok(Elliptic {
            domain: Arc::new(closure),
            stiffness,
            kind: BoundaryKind::Robin,
        })
    }

    pub fn domain(&self) -> &Arc<GridDomain<T>> {
        &self.domain
    }

    pub fn stiffness(&self) -> &SparseOperator<T> {
        &self.stiffness
    }

    pub fn kind(&self) -> BoundaryKind {
        self.kind
    }

    pub fn apply(&self, u: &Field<T>) -> Field<T> {
        Field::from_values(&self.domain, 1, self.stiffness.apply(u.values()))
    }

    pub fn gradient(&self, u: &Field<T>) -> Field<T> {
        forward_gradient(&self.domain, u, self.kind == BoundaryKind::Dirichlet)
    }

    /// `⟨A u, u⟩` in the `h^d` inner product: `‖∇u‖²` (Dirichlet) or `a(u)` (Robin).
    pub fn energy(&self, u: &Field<T>) -> T {
        self.apply(u).inner(u).max(T::zero())
    }

    /// `(energy(u) + ‖u‖²)^{1/2}`.
    pub fn h1_norm(&self, u: &Field<T>) -> T {
        (self.energy(u) + u.inner(u)).sqrt()
    }
}
