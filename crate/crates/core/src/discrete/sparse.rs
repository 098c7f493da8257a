use std::collections::BTreeMap;

use crate::scalar::Real;

/// Square operator in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator<T> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
    symmetric: bool,
}

impl<T: Real> SparseOperator<T> {
    /// Build from `(row, col, value)` triplets; duplicates are summed in
    /// insertion order so assembly is bit-reproducible.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, T)], symmetric: bool) -> Self {
        let mut rows: Vec<BTreeMap<usize, T>> = vec![BTreeMap::new(); n];
        for &(i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) out of range for n = {n}");
            *rows[i].entry(j).or_insert_with(T::zero) += v;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (j, v) in row {
                cols.push(j);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        SparseOperator {
            n,
            row_ptr,
            cols,
            vals,
            symmetric,
        }
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, T::one())).collect();
        Self::from_triplets(n, &t, true)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.row(i).find(|&(c, _)| c == j).map_or(T::zero(), |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`, rows in order, entries in column order.
    pub fn apply_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yi = acc;
        }
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        self.apply_into(x, &mut y);
        y
    }

    /// `A + shift·I`.
    pub fn shifted(&self, shift: T) -> Self {
        let mut t = self.triplets();
        t.extend((0..self.n).map(|i| (i, i, shift)));
        Self::from_triplets(self.n, &t, self.symmetric)
    }

    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        (0..self.n).flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v))).collect()
    }

    /// Largest `|a_ij - a_ji|` over stored entries.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Dense row-major copy, for small-problem checks.
    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }
}
