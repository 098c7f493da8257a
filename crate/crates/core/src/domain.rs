//! Masked uniform grids standing in for arbitrary open sets.
//!
//! A [`GridDomain`] is a finite set of lattice nodes `lo + (k - 1)·h` that
//! sample an open set `Ω` inside a bounding box. Dirichlet data lives on every
//! lattice node outside the set. The lattice carries two padding layers so the
//! Robin closure (interior plus exterior neighbours) still has addressable
//! neighbours.

use std::collections::HashMap;

use thiserror::Error;

use crate::expr::{Expr, ExprError, Point, Var};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("grid spacing must be positive, got {0}")]
    InvalidSpacing(f64),
    #[error("bounding box is degenerate along axis {axis}")]
    DegenerateBox { axis: usize },
    #[error("dimension {0} not supported (expected 1, 2 or 3)")]
    Dimension(usize),
    #[error("no grid node lies inside the domain")]
    Empty,
    #[error("indicator may only reference x-variables, found `{0}`")]
    IndicatorVariables(String),
    #[error("domain specification: {0}")]
    Spec(String),
    #[error("indicator evaluation failed at {at:?}: {source}")]
    Expr {
        at: Vec<f64>,
        #[source]
        source: ExprError,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundingBox<T> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

impl<T: Real> BoundingBox<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Self {
        BoundingBox { lo, hi }
    }

    pub fn unit(dim: usize) -> Self {
        BoundingBox {
            lo: vec![T::zero(); dim],
            hi: vec![T::one(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> Vec<T> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&a, &b)| (a + b) / T::lit(2.0))
            .collect()
    }
}

/// How the open set is described.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainSpec {
    /// `Ω = {x : ind(x) > 0}`.
    Indicator(Expr),
    Interval { a: f64, b: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Disk { center: Vec<f64>, radius: f64 },
    Annulus { center: Vec<f64>, inner: f64, outer: f64 },
    /// The box with its upper corner quadrant `[mid, hi)^d` removed.
    LShape { lo: Vec<f64>, hi: Vec<f64> },
    UnionOfBoxes(Vec<(Vec<f64>, Vec<f64>)>),
}

impl DomainSpec {
    fn validate(&self) -> Result<(), DomainError> {
        if let DomainSpec::Indicator(e) = self {
            if !e.uses_only(|v| matches!(v, Var::X(_))) {
                let bad = e
                    .free_vars()
                    .into_iter()
                    .find(|n| !n.starts_with('x') || n.starts_with("xi"))
                    .unwrap_or_default();
                return Err(DomainError::IndicatorVariables(bad));
            }
        }
        Ok(())
    }

    /// Membership test for a point of the open set.
    pub fn contains<T: Real>(&self, x: &[T]) -> Result<bool, ExprError> {
        let inside_box =
            |lo: &[f64], hi: &[f64]| x.iter().zip(lo.iter().zip(hi)).all(|(&v, (&a, &b))| T::lit(a) < v && v < T::lit(b));
        let dist2 = |c: &[f64]| {
            x.iter()
                .zip(c)
                .map(|(&v, &ci)| (v - T::lit(ci)) * (v - T::lit(ci)))
                .fold(T::zero(), |a, b| a + b)
        };
        Ok(match self {
            DomainSpec::Indicator(e) => e.eval(&Point::at(x, T::zero()))? > T::zero(),
            DomainSpec::Interval { a, b } => inside_box(&[*a], &[*b]),
            DomainSpec::Box { lo, hi } => inside_box(lo, hi),
            DomainSpec::Disk { center, radius } => dist2(center) < T::lit(radius * radius),
            DomainSpec::Annulus { center, inner, outer } => {
                let r2 = dist2(center);
                T::lit(inner * inner) < r2 && r2 < T::lit(outer * outer)
            }
            DomainSpec::LShape { lo, hi } => {
                let corner = x
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .all(|(&v, (&a, &b))| v >= T::lit(0.5 * (a + b)));
                inside_box(lo, hi) && !corner
            }
            DomainSpec::UnionOfBoxes(boxes) => boxes.iter().any(|(lo, hi)| inside_box(lo, hi)),
        })
    }
}

/// A boundary face: an interior node whose neighbour along `axis` in direction
/// `dir` (±1) is not part of the node set. Area `h^(d-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub node: usize,
    pub axis: usize,
    pub dir: i8,
}

#[derive(Debug, Clone)]
pub struct GridDomain<T> {
    dim: usize,
    h: T,
    bbox: BoundingBox<T>,
    /// Lattice extent per axis (including the two padding layers on each side).
    shape: Vec<usize>,
    /// Lattice linear index of each node, strictly increasing.
    lattice: Vec<usize>,
    /// Lattice linear index → node row.
    lookup: HashMap<usize, usize>,
    coords: Vec<T>,
    faces: Vec<Face>,
}

impl<T: Real> PartialEq for GridDomain<T> {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.h == other.h
            && self.bbox == other.bbox
            && self.shape == other.shape
            && self.lattice == other.lattice
    }
}

/// Sample `spec` on the lattice of spacing `h` inside `bbox`.
pub fn build_domain<T: Real>(spec: &DomainSpec, h: T, bbox: &BoundingBox<T>) -> Result<GridDomain<T>, DomainError> {
    spec.validate()?;
    let dim = bbox.dim();
    if !(1..=3).contains(&dim) || bbox.hi.len() != dim {
        return Err(DomainError::Dimension(dim));
    }
    if !(h > T::zero()) || !h.is_finite() {
        return Err(DomainError::InvalidSpacing(h.as_f64()));
    }
    for axis in 0..dim {
        if !(bbox.hi[axis] > bbox.lo[axis]) {
            return Err(DomainError::DegenerateBox { axis });
        }
    }
    // cells[axis] = number of lattice steps from lo to the first point at or past hi.
    let cells: Vec<usize> = (0..dim)
        .map(|a| {
            let ratio = ((bbox.hi[a] - bbox.lo[a]) / h).as_f64();
            let n = (ratio - 1e-9).ceil();
            n.max(1.0) as usize
        })
        .collect();
    let shape: Vec<usize> = cells.iter().map(|n| n + 3).collect();
    let total: usize = shape.iter().product();
    let mut lattice = Vec::new();
    let mut point = vec![T::zero(); dim];
    for lin in 0..total {
        let multi = unravel(lin, &shape);
        // Candidates are lattice positions j = k - 1 in 1..cells, strictly inside the box.
        if multi.iter().zip(&cells).any(|(&k, &n)| k < 2 || k > n) {
            continue;
        }
        for a in 0..dim {
            point[a] = bbox.lo[a] + T::from_usize_lossy(multi[a] - 1) * h;
        }
        if point.iter().zip(&bbox.hi).any(|(&p, &hi)| p >= hi) {
            continue;
        }
        let inside = spec.contains(&point).map_err(|source| DomainError::Expr {
            at: point.iter().map(|v| v.as_f64()).collect(),
            source,
        })?;
        if inside {
            lattice.push(lin);
        }
    }
    if lattice.is_empty() {
        return Err(DomainError::Empty);
    }
    Ok(GridDomain::from_lattice(dim, h, bbox.clone(), shape, lattice))
}

fn unravel(mut lin: usize, shape: &[usize]) -> Vec<usize> {
    shape
        .iter()
        .map(|&n| {
            let k = lin % n;
            lin /= n;
            k
        })
        .collect()
}

impl<T: Real> GridDomain<T> {
    fn from_lattice(dim: usize, h: T, bbox: BoundingBox<T>, shape: Vec<usize>, lattice: Vec<usize>) -> Self {
        let lookup: HashMap<usize, usize> = lattice.iter().enumerate().map(|(row, &lin)| (lin, row)).collect();
        let mut coords = Vec::with_capacity(lattice.len() * dim);
        for &lin in &lattice {
            let multi = unravel(lin, &shape);
            for a in 0..dim {
                coords.push(bbox.lo[a] + (T::from_usize_lossy(multi[a]) - T::one()) * h);
            }
        }
        let mut dom = GridDomain {
            dim,
            h,
            bbox,
            shape,
            lattice,
            lookup,
            coords,
            faces: Vec::new(),
        };
        let mut faces = Vec::new();
        for node in 0..dom.len() {
            for axis in 0..dim {
                for dir in [-1i8, 1] {
                    if dom.neighbor(node, axis, dir).is_none() {
                        faces.push(Face { node, axis, dir });
                    }
                }
            }
        }
        dom.faces = faces;
        dom
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn bbox(&self) -> &BoundingBox<T> {
        &self.bbox
    }

    /// Number of nodes `N`.
    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    /// Quadrature weight `h^d` of a node.
    pub fn cell_volume(&self) -> T {
        self.h.powi(self.dim as i32)
    }

    /// Face area `h^(d-1)`.
    pub fn face_area(&self) -> T {
        self.h.powi(self.dim as i32 - 1)
    }

    /// Discrete measure `N·h^d`.
    pub fn measure(&self) -> T {
        T::from_usize_lossy(self.len()) * self.cell_volume()
    }

    pub fn coords(&self, node: usize) -> &[T] {
        &self.coords[node * self.dim..(node + 1) * self.dim]
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    /// Lattice linear index of a node; stable across subdomains of one lattice.
    pub fn lattice_index(&self, node: usize) -> usize {
        self.lattice[node]
    }

    pub fn node_of_lattice(&self, lin: usize) -> Option<usize> {
        self.lookup.get(&lin).copied()
    }

    fn stride(&self, axis: usize) -> usize {
        self.shape[..axis].iter().product()
    }

    fn neighbor_lattice(&self, node: usize, axis: usize, dir: i8) -> Option<usize> {
        let lin = self.lattice[node];
        let k = (lin / self.stride(axis)) % self.shape[axis];
        if dir < 0 {
            (k > 0).then(|| lin - self.stride(axis))
        } else {
            (k + 1 < self.shape[axis]).then(|| lin + self.stride(axis))
        }
    }

    /// Row of the neighbour along `axis` in direction `dir`, if it belongs to the set.
    pub fn neighbor(&self, node: usize, axis: usize, dir: i8) -> Option<usize> {
        self.neighbor_lattice(node, axis, dir)
            .and_then(|lin| self.node_of_lattice(lin))
    }

    /// Coordinates of the midpoint of a boundary face.
    pub fn face_midpoint(&self, face: &Face) -> Vec<T> {
        let mut x = self.coords(face.node).to_vec();
        let half = self.h / T::lit(2.0);
        if face.dir < 0 {
            x[face.axis] -= half;
        } else {
            x[face.axis] += half;
        }
        x
    }

    /// Subdomain on the same lattice keeping the nodes selected by `keep`.
    pub fn subdomain(&self, keep: impl Fn(usize) -> bool) -> GridDomain<T> {
        let lattice = (0..self.len()).filter(|&n| keep(n)).map(|n| self.lattice[n]).collect();
        GridDomain::from_lattice(self.dim, self.h, self.bbox.clone(), self.shape.clone(), lattice)
    }

    /// Node set extended by every exterior lattice neighbour of an interior node.
    /// These become unknowns carrying the boundary mass in Robin mode.
    pub fn robin_closure(&self) -> GridDomain<T> {
        let mut lattice: Vec<usize> = self.lattice.clone();
        for face in &self.faces {
            if let Some(lin) = self.neighbor_lattice(face.node, face.axis, face.dir) {
                lattice.push(lin);
            }
        }
        lattice.sort_unstable();
        lattice.dedup();
        GridDomain::from_lattice(self.dim, self.h, self.bbox.clone(), self.shape.clone(), lattice)
    }

    /// True if both domains live on the same lattice and every node of `self` is in `other`.
    pub fn is_subset_of(&self, other: &GridDomain<T>) -> bool {
        self.shape == other.shape && self.lattice.iter().all(|lin| other.lookup.contains_key(lin))
    }

    pub fn same_nodes(&self, other: &GridDomain<T>) -> bool {
        self.shape == other.shape && self.lattice == other.lattice
    }

    /// Row in `self` of each node of `sub` (which must be a subset).
    pub fn embedding_of(&self, sub: &GridDomain<T>) -> Option<Vec<usize>> {
        sub.lattice.iter().map(|lin| self.node_of_lattice(*lin)).collect()
    }

    /// Number of interior neighbours plus boundary faces at `node` (always `2d`).
    pub fn stencil_count(&self, node: usize) -> usize {
        let neighbors = (0..self.dim)
            .flat_map(|a| [(a, -1i8), (a, 1)])
            .filter(|&(a, d)| self.neighbor(node, a, d).is_some())
            .count();
        neighbors + self.faces.iter().filter(|f| f.node == node).count()
    }
}

/// Level `k` of the exhaustion: nodes inside the open cube of half-side
/// `k·s0` centred in the bounding box whose lattice neighbours all lie in the
/// closed cube of level `k + 1`.
pub fn exhaustion<T: Real>(dom: &GridDomain<T>, k: usize, s0: T) -> GridDomain<T> {
    let center = dom.bbox.center();
    let r = T::from_usize_lossy(k) * s0;
    let r_next = r + s0;
    let h = dom.h;
    dom.subdomain(|node| {
        let x = dom.coords(node);
        x.iter().zip(&center).all(|(&xi, &c)| {
            let off = (xi - c).abs();
            off < r && off + h <= r_next
        })
    })
}

/// Smallest `k` for which [`exhaustion`] returns the whole domain.
pub fn saturation_level<T: Real>(dom: &GridDomain<T>, s0: T) -> usize {
    let center = dom.bbox.center();
    let mut reach = T::zero();
    for node in 0..dom.len() {
        for (&xi, &c) in dom.coords(node).iter().zip(&center) {
            reach = reach.max((xi - c).abs());
        }
    }
    let mut k = (reach / s0).floor().to_usize().unwrap_or(0).max(1);
    while exhaustion(dom, k, s0).len() < dom.len() {
        k += 1;
    }
    k
}
