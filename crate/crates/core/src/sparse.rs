//! Compressed sparse row matrices and the linear-map abstraction shared by
//! the propagators and iterative solvers.

use ndarray::Array2;
use rayon::prelude::*;

use crate::{C64, ZERO};

/// A square linear map on `C^dim`.
pub trait LinearMap: Sync {
    fn dim(&self) -> usize;

    /// `y = A x`; `y` is overwritten.
    fn apply(&self, x: &[C64], y: &mut [C64]);

    fn apply_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.dim()];
        self.apply(x, &mut y);
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

/// Coordinate-format accumulator; duplicates are summed on compression.
#[derive(Debug, Clone, Default)]
pub struct Coo {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: Vec<C64>,
}

impl Coo {
    pub fn push(&mut self, r: usize, c: usize, v: C64) {
        self.rows.push(r);
        self.cols.push(c);
        self.values.push(v);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_coo(nrows: usize, ncols: usize, coo: &Coo) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &r in &coo.rows {
            counts[r + 1] += 1;
        }
        for r in 0..nrows {
            counts[r + 1] += counts[r];
        }
        let mut order = vec![0usize; coo.len()];
        let mut next = counts.clone();
        for (k, &r) in coo.rows.iter().enumerate() {
            order[next[r]] = k;
            next[r] += 1;
        }
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(coo.len());
        let mut values = Vec::with_capacity(coo.len());
        let mut row: Vec<(usize, C64)> = Vec::new();
        for r in 0..nrows {
            row.clear();
            row.extend(order[counts[r]..counts[r + 1]].iter().map(|&k| (coo.cols[k], coo.values[k])));
            row.sort_unstable_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < row.len() {
                let c = row[i].0;
                let mut v = ZERO;
                while i < row.len() && row[i].0 == c {
                    v += row[i].1;
                    i += 1;
                }
                if v != ZERO {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr[r + 1] = indices.len();
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense(a: &Array2<C64>) -> Self {
        let mut coo = Coo::default();
        for ((r, c), &v) in a.indexed_iter() {
            if v != ZERO {
                coo.push(r, c, v);
            }
        }
        Self::from_coo(a.nrows(), a.ncols(), &coo)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[C64]) {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn to_coo(&self) -> Coo {
        let mut coo = Coo::default();
        for (r, c, v) in self.iter() {
            coo.push(r, c, v);
        }
        coo
    }

    pub fn to_dense(&self) -> Array2<C64> {
        let mut a = Array2::zeros((self.nrows, self.ncols));
        for (r, c, v) in self.iter() {
            a[[r, c]] += v;
        }
        a
    }

    pub fn transpose(&self) -> Self {
        let mut coo = Coo::default();
        for (r, c, v) in self.iter() {
            coo.push(c, r, v);
        }
        Self::from_coo(self.ncols, self.nrows, &coo)
    }

    pub fn adjoint(&self) -> Self {
        let mut coo = Coo::default();
        for (r, c, v) in self.iter() {
            coo.push(c, r, v.conj());
        }
        Self::from_coo(self.ncols, self.nrows, &coo)
    }

    pub fn scaled(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `self + other`, same shape.
    pub fn add(&self, other: &CsrMatrix) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut coo = self.to_coo();
        for (r, c, v) in other.iter() {
            coo.push(r, c, v);
        }
        Self::from_coo(self.nrows, self.ncols, &coo)
    }

    /// `self · other`.
    pub fn matmul(&self, other: &CsrMatrix) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut coo = Coo::default();
        for (r, k, a) in self.iter() {
            let (cols, vals) = other.row(k);
            for (&c, &b) in cols.iter().zip(vals) {
                coo.push(r, c, a * b);
            }
        }
        Self::from_coo(self.nrows, other.ncols, &coo)
    }

    /// `y = A x` for a single (short) vector, sequential.
    pub fn mul_vec_into(&self, x: &[C64], y: &mut [C64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            *yr = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
        }
    }

    /// `y += A x`, sequential.
    pub fn mul_vec_add(&self, x: &[C64], y: &mut [C64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            let s: C64 = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
            *yr += s;
        }
    }

    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        let diff = self.add(&other.scaled(-crate::ONE));
        diff.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

impl LinearMap for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        const CHUNK: usize = 4096;
        y.par_chunks_mut(CHUNK).enumerate().for_each(|(k, chunk)| {
            for (i, yr) in chunk.iter_mut().enumerate() {
                let (cols, vals) = self.row(k * CHUNK + i);
                *yr = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
            }
        });
    }
}

/// Dense matrices as linear maps.
pub struct DenseMap<'a>(pub &'a Array2<C64>);

impl LinearMap for DenseMap<'_> {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.0.row(r).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}
