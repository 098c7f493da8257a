//! Grid functions and their on-disk formats.
//!
//! EFLD layout (little endian):
//!
//! ```text
//! magic   b"EFLD"
//! version u32 (= 1)
//! d       u32
//! c       u32          components per node
//! N       u64          node count
//! h       f64
//! bbox    2·d f64      lo[0..d] then hi[0..d]
//! values  c·N f64      node-major: node 0 components, node 1 components, …
//! ```

use std::fs;
use std::io::{self, Write as _};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex;
use thiserror::Error;

use crate::domain::GridDomain;
use crate::scalar::Real;

pub const EFLD_MAGIC: &[u8; 4] = b"EFLD";
pub const EFLD_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FieldIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: not an EFLD file or unsupported version")]
    Format { path: String },
    #[error("{path}: header does not match the domain ({detail})")]
    Mismatch { path: String, detail: String },
}

/// Real grid function with `components` values per node.
#[derive(Debug, Clone)]
pub struct Field<T> {
    domain: Arc<GridDomain<T>>,
    components: usize,
    values: Vec<T>,
}

impl<T: Real> PartialEq for Field<T> {
    fn eq(&self, other: &Self) -> bool {
        self.components == other.components
            && self.values == other.values
            && (Arc::ptr_eq(&self.domain, &other.domain) || *self.domain == *other.domain)
    }
}

impl<T: Real> Field<T> {
    pub fn zeros(domain: &Arc<GridDomain<T>>) -> Self {
        Self::with_components(domain, 1)
    }

    pub fn with_components(domain: &Arc<GridDomain<T>>, components: usize) -> Self {
        Field {
            domain: Arc::clone(domain),
            components,
            values: vec![T::zero(); components * domain.len()],
        }
    }

    pub fn from_values(domain: &Arc<GridDomain<T>>, components: usize, values: Vec<T>) -> Self {
        assert_eq!(values.len(), components * domain.len(), "field length mismatch");
        Field {
            domain: Arc::clone(domain),
            components,
            values,
        }
    }

    /// Scalar field from a function of the node coordinates.
    pub fn from_fn(domain: &Arc<GridDomain<T>>, f: impl Fn(&[T]) -> T) -> Self {
        let values = (0..domain.len()).map(|n| f(domain.coords(n))).collect();
        Self::from_values(domain, 1, values)
    }

    pub fn constant(domain: &Arc<GridDomain<T>>, value: T) -> Self {
        Self::from_values(domain, 1, vec![value; domain.len()])
    }

    pub fn domain(&self) -> &Arc<GridDomain<T>> {
        &self.domain
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Components at one node.
    pub fn at(&self, node: usize) -> &[T] {
        &self.values[node * self.components..(node + 1) * self.components]
    }

    pub fn same_domain(&self, other: &Field<T>) -> bool {
        Arc::ptr_eq(&self.domain, &other.domain) || self.domain.same_nodes(&other.domain)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Field<T> {
        Field {
            domain: Arc::clone(&self.domain),
            components: self.components,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field<T>, f: impl Fn(T, T) -> T) -> Field<T> {
        assert_eq!(self.values.len(), other.values.len());
        Field {
            domain: Arc::clone(&self.domain),
            components: self.components,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn scale(&self, t: T) -> Field<T> {
        self.map(|v| v * t)
    }

    pub fn sub(&self, other: &Field<T>) -> Field<T> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Field<T>) -> Field<T> {
        self.zip_map(other, |a, b| a + b)
    }

    /// `h^d`-weighted inner product.
    pub fn inner(&self, other: &Field<T>) -> T {
        dot(&self.values, &other.values) * self.domain.cell_volume()
    }

    /// `h^d`-weighted ℓ₂ norm.
    pub fn norm(&self) -> T {
        self.inner(self).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Pointwise Euclidean norm of the node components (a scalar field).
    pub fn pointwise_norm(&self) -> Field<T> {
        let c = self.components;
        let values = self
            .values
            .chunks(c)
            .map(|chunk| chunk.iter().fold(T::zero(), |a, &v| a + v * v).sqrt())
            .collect();
        Field::from_values(&self.domain, 1, values)
    }

    /// Re-index onto `target`, a domain of the same lattice; nodes absent from
    /// `self` are zero.
    pub fn extend_to(&self, target: &Arc<GridDomain<T>>) -> Field<T> {
        let c = self.components;
        let mut values = vec![T::zero(); c * target.len()];
        for node in 0..self.domain.len() {
            if let Some(row) = target.node_of_lattice(self.domain.lattice_index(node)) {
                values[row * c..(row + 1) * c].copy_from_slice(self.at(node));
            }
        }
        Field::from_values(target, c, values)
    }

    pub fn write_efld(&self, path: impl AsRef<Path>) -> Result<(), FieldIoError> {
        let bytes = encode_efld(&self.domain, self.components, self.values.iter().map(|v| v.as_f64()));
        write_bytes(path.as_ref(), &bytes)
    }

    /// Read an EFLD file written for `domain`.
    pub fn read_efld(path: impl AsRef<Path>, domain: &Arc<GridDomain<T>>) -> Result<Field<T>, FieldIoError> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let bytes = fs::read(path).map_err(|source| FieldIoError::Io {
            path: name.clone(),
            source,
        })?;
        let (header, values) = decode_efld(&bytes).ok_or(FieldIoError::Format { path: name.clone() })?;
        let mismatch = |detail: String| FieldIoError::Mismatch {
            path: name.clone(),
            detail,
        };
        if header.dim != domain.dim() {
            return Err(mismatch(format!("dimension {} vs {}", header.dim, domain.dim())));
        }
        if header.nodes != domain.len() {
            return Err(mismatch(format!("node count {} vs {}", header.nodes, domain.len())));
        }
        if header.h != domain.h().as_f64() {
            return Err(mismatch(format!("spacing {} vs {}", header.h, domain.h())));
        }
        let values = values.into_iter().map(T::lit).collect();
        Ok(Field::from_values(domain, header.components, values))
    }

    /// CSV with header `x1,…,xd,value` (or `value0,value1,…` for several components).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), FieldIoError> {
        let names: Vec<String> = if self.components == 1 {
            vec!["value".into()]
        } else {
            (0..self.components).map(|c| format!("value{c}")).collect()
        };
        let rows = (0..self.domain.len()).map(|n| self.at(n).iter().map(|v| v.as_f64()).collect::<Vec<_>>());
        write_bytes(path.as_ref(), &encode_csv(&self.domain, &names, rows))
    }
}

/// Complex scalar grid function.
#[derive(Debug, Clone)]
pub struct ComplexField<T> {
    domain: Arc<GridDomain<T>>,
    values: Vec<Complex<T>>,
}

impl<T: Real> ComplexField<T> {
    pub fn from_values(domain: &Arc<GridDomain<T>>, values: Vec<Complex<T>>) -> Self {
        assert_eq!(values.len(), domain.len());
        ComplexField {
            domain: Arc::clone(domain),
            values,
        }
    }

    pub fn domain(&self) -> &Arc<GridDomain<T>> {
        &self.domain
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn norm(&self) -> T {
        let s = self.values.iter().fold(T::zero(), |a, z| a + z.norm_sqr());
        (s * self.domain.cell_volume()).sqrt()
    }

    /// EFLD with two interleaved components (real, imaginary) per node.
    pub fn write_efld(&self, path: impl AsRef<Path>) -> Result<(), FieldIoError> {
        let bytes = encode_efld(
            &self.domain,
            2,
            self.values.iter().flat_map(|z| [z.re.as_f64(), z.im.as_f64()]),
        );
        write_bytes(path.as_ref(), &bytes)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), FieldIoError> {
        let names = vec!["value".to_string(), "value_im".to_string()];
        let rows = self.values.iter().map(|z| vec![z.re.as_f64(), z.im.as_f64()]);
        write_bytes(path.as_ref(), &encode_csv(&self.domain, &names, rows))
    }
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfldHeader {
    pub dim: usize,
    pub components: usize,
    pub nodes: usize,
    pub h: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

fn encode_efld<T: Real>(dom: &GridDomain<T>, components: usize, values: impl Iterator<Item = f64>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(EFLD_MAGIC);
    out.extend_from_slice(&EFLD_VERSION.to_le_bytes());
    out.extend_from_slice(&(dom.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(components as u32).to_le_bytes());
    out.extend_from_slice(&(dom.len() as u64).to_le_bytes());
    out.extend_from_slice(&dom.h().as_f64().to_le_bytes());
    for v in dom.bbox().lo.iter().chain(&dom.bbox().hi) {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parse an EFLD byte buffer into its header and raw values.
pub fn decode_efld(bytes: &[u8]) -> Option<(EfldHeader, Vec<f64>)> {
    let mut cur = bytes;
    let mut take = |n: usize| -> Option<&[u8]> {
        if cur.len() < n {
            return None;
        }
        let (head, tail) = cur.split_at(n);
        cur = tail;
        Some(head)
    };
    if take(4)? != EFLD_MAGIC {
        return None;
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
    if u32_at(take(4)?) != EFLD_VERSION {
        return None;
    }
    let dim = u32_at(take(4)?) as usize;
    let components = u32_at(take(4)?) as usize;
    let nodes = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let mut f64s = |n: usize| -> Option<Vec<f64>> {
        (0..n)
            .map(|_| take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())))
            .collect()
    };
    let h = f64s(1)?[0];
    let lo = f64s(dim)?;
    let hi = f64s(dim)?;
    let values = f64s(components.checked_mul(nodes)?)?;
    if !cur.is_empty() {
        return None;
    }
    Some((
        EfldHeader {
            dim,
            components,
            nodes,
            h,
            lo,
            hi,
        },
        values,
    ))
}

fn encode_csv<T: Real>(dom: &GridDomain<T>, names: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Vec<u8> {
    let mut out = String::new();
    let mut header: Vec<String> = (1..=dom.dim()).map(|i| format!("x{i}")).collect();
    header.extend(names.iter().cloned());
    out.push_str(&header.join(","));
    out.push('\n');
    for (node, row) in rows.enumerate() {
        let mut cells: Vec<String> = dom.coords(node).iter().map(|v| format!("{:e}", v.as_f64())).collect();
        cells.extend(row.iter().map(|v| format!("{v:e}")));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), FieldIoError> {
    let name = path.display().to_string();
    let io_err = |source| FieldIoError::Io {
        path: name.clone(),
        source,
    };
    if name.is_empty() {
        return Err(io_err(io::Error::new(io::ErrorKind::InvalidInput, "empty path")));
    }
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(bytes).map_err(io_err)
}
