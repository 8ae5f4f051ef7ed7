//! Dense operators on tensor products of site spaces.
//!
//! Site order inside a support follows the sorted site list; the first site
//! is the most significant tensor factor. Superkets use column stacking:
//! `vec(O)[r + D*c] = O[r, c]`.

use ndarray::{s, Array1, Array2, ShapeBuilder};
use ndarray_linalg::{Eigh, QR, SVD, UPLO};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, Region, Site};
use crate::{C64, I, ONE, ZERO};

pub type Matrix = Array2<C64>;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOperator {
    support: Region,
    dims: Vec<usize>,
    matrix: Matrix,
}

/// Index maps between a region's tensor space and a sub-region's.
///
/// `inner[i]` is the offset, in the outer space, of basis state `i` of the
/// sub-region with all other sites at 0; `rest[e]` likewise for the
/// complementary sites. Every outer index is uniquely `inner[i] + rest[e]`.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub inner: Vec<usize>,
    pub rest: Vec<usize>,
}

impl Layout {
    pub fn new(outer: &Region, outer_dims: &[usize], sub: &Region) -> Result<Self> {
        if !sub.is_subset(outer) {
            return Err(Error::BadSupport {
                support: sub.sites().to_vec(),
                target: outer.sites().to_vec(),
            });
        }
        let n = outer.len();
        let mut strides = vec![1usize; n];
        for p in (0..n.saturating_sub(1)).rev() {
            strides[p] = strides[p + 1] * outer_dims[p + 1];
        }
        let mut in_sub = Vec::new();
        let mut in_rest = Vec::new();
        for (p, &x) in outer.sites().iter().enumerate() {
            if sub.contains(x) {
                in_sub.push((outer_dims[p], strides[p]));
            } else {
                in_rest.push((outer_dims[p], strides[p]));
            }
        }
        Ok(Self {
            inner: offsets(&in_sub),
            rest: offsets(&in_rest),
        })
    }
}

fn offsets(factors: &[(usize, usize)]) -> Vec<usize> {
    let mut out = vec![0usize];
    for &(dim, stride) in factors {
        let mut next = Vec::with_capacity(out.len() * dim);
        for &o in &out {
            for k in 0..dim {
                next.push(o + k * stride);
            }
        }
        out = next;
    }
    out
}

impl LocalOperator {
    pub fn new(support: Region, dims: Vec<usize>, matrix: Matrix) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::EmptyRegion);
        }
        if dims.len() != support.len() {
            return Err(Error::BadShape(format!(
                "{} site dimensions for a {}-site support",
                dims.len(),
                support.len()
            )));
        }
        let dim: usize = dims.iter().product();
        if matrix.dim() != (dim, dim) {
            return Err(Error::BadShape(format!(
                "matrix {:?} on a support of dimension {dim}",
                matrix.dim()
            )));
        }
        Ok(Self {
            support,
            dims,
            matrix,
        })
    }

    /// Operator on `support` with site dimensions taken from `lattice`.
    pub fn on(lattice: &Lattice, support: Region, matrix: Matrix) -> Result<Self> {
        let support = lattice.region(support.sites().iter().copied())?;
        let dims = lattice.dims_of(&support);
        Self::new(support, dims, matrix)
    }

    pub fn identity(support: Region, dims: Vec<usize>) -> Result<Self> {
        let dim = dims.iter().product();
        Self::new(support, dims, Matrix::eye(dim))
    }

    /// Tensor product of single-site matrices, one per site of `support`.
    pub fn product(support: Region, factors: &[Matrix]) -> Result<Self> {
        if factors.len() != support.len() {
            return Err(Error::BadShape(format!(
                "{} factors for a {}-site support",
                factors.len(),
                support.len()
            )));
        }
        let dims = factors.iter().map(|f| f.nrows()).collect();
        let mut m = Matrix::eye(1);
        for f in factors {
            m = kron(&m, f);
        }
        Self::new(support, dims, m)
    }

    pub fn support(&self) -> &Region {
        &self.support
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    fn site_dim(&self, x: Site) -> Option<usize> {
        self.support.position(x).map(|p| self.dims[p])
    }

    /// Tensor with the identity on `target \ support`.
    pub fn embed(&self, target: &Region, target_dims: &[usize]) -> Result<LocalOperator> {
        if target == &self.support {
            return Ok(self.clone());
        }
        let layout = Layout::new(target, target_dims, &self.support)?;
        for (p, &x) in target.sites().iter().enumerate() {
            if let Some(d) = self.site_dim(x) {
                if d != target_dims[p] {
                    return Err(Error::BadShape(format!("site {x} has dimension {d}, target says {}", target_dims[p])));
                }
            }
        }
        let dim: usize = target_dims.iter().product();
        let mut out = Matrix::zeros((dim, dim));
        for ((i, j), &v) in self.matrix.indexed_iter() {
            if v == ZERO {
                continue;
            }
            let (ri, cj) = (layout.inner[i], layout.inner[j]);
            for &e in &layout.rest {
                out[[ri + e, cj + e]] = v;
            }
        }
        LocalOperator::new(target.clone(), target_dims.to_vec(), out)
    }

    /// Site dimensions over `region`, taken from either operand.
    fn joint_dims(&self, other: &LocalOperator, region: &Region) -> Result<Vec<usize>> {
        region
            .sites()
            .iter()
            .map(|&x| match (self.site_dim(x), other.site_dim(x)) {
                (Some(a), Some(b)) if a != b => Err(Error::BadShape(format!("site {x}: dimension {a} vs {b}"))),
                (Some(a), _) | (None, Some(a)) => Ok(a),
                (None, None) => unreachable!(),
            })
            .collect()
    }

    fn lift_pair(&self, other: &LocalOperator) -> Result<(LocalOperator, LocalOperator)> {
        let union = self.support.union(&other.support);
        let dims = self.joint_dims(other, &union)?;
        Ok((self.embed(&union, &dims)?, other.embed(&union, &dims)?))
    }

    /// `self · other` on the union of supports.
    pub fn mul(&self, other: &LocalOperator) -> Result<LocalOperator> {
        let (a, b) = self.lift_pair(other)?;
        let m = a.matrix.dot(&b.matrix);
        LocalOperator::new(a.support, a.dims, m)
    }

    pub fn add(&self, other: &LocalOperator) -> Result<LocalOperator> {
        let (a, b) = self.lift_pair(other)?;
        LocalOperator::new(a.support, a.dims, a.matrix + b.matrix)
    }

    pub fn sub(&self, other: &LocalOperator) -> Result<LocalOperator> {
        let (a, b) = self.lift_pair(other)?;
        LocalOperator::new(a.support, a.dims, a.matrix - b.matrix)
    }

    pub fn scale(&self, c: C64) -> LocalOperator {
        LocalOperator {
            support: self.support.clone(),
            dims: self.dims.clone(),
            matrix: self.matrix.mapv(|v| v * c),
        }
    }

    pub fn adjoint(&self) -> LocalOperator {
        LocalOperator {
            support: self.support.clone(),
            dims: self.dims.clone(),
            matrix: dagger(&self.matrix),
        }
    }

    pub fn trace(&self) -> C64 {
        self.matrix.diag().sum()
    }

    /// Largest absolute deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        max_abs_diff(&self.matrix, &dagger(&self.matrix))
    }

    /// Partial trace down to `keep`, which must be a subset of the support.
    pub fn partial_trace(&self, keep: &Region) -> Result<LocalOperator> {
        let layout = Layout::new(&self.support, &self.dims, keep)?;
        let dims: Vec<usize> = keep.sites().iter().map(|&x| self.site_dim(x).unwrap()).collect();
        let d = layout.inner.len();
        let mut out = Matrix::zeros((d, d));
        for (i, &oi) in layout.inner.iter().enumerate() {
            for (j, &oj) in layout.inner.iter().enumerate() {
                out[[i, j]] = layout.rest.iter().map(|&e| self.matrix[[oi + e, oj + e]]).sum();
            }
        }
        LocalOperator::new(keep.clone(), dims, out)
    }
}

/// `[a, b] = ab - ba` on the union of supports.
pub fn commutator(a: &LocalOperator, b: &LocalOperator) -> Result<LocalOperator> {
    let (a, b) = a.lift_pair(b)?;
    let m = a.matrix.dot(&b.matrix) - b.matrix.dot(&a.matrix);
    LocalOperator::new(a.support, a.dims, m)
}

/// Largest singular value.
pub fn op_norm(op: &LocalOperator) -> f64 {
    matrix_norm(&op.matrix)
}

const NORM_DENSE_BELOW: usize = 64;
const NORM_RTOL: f64 = 1e-12;

/// Spectral norm of a square matrix: Lanczos on `A†A` with full
/// reorthogonalization, dense SVD for small matrices or if Lanczos stalls.
pub fn matrix_norm(a: &Matrix) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    if n < NORM_DENSE_BELOW || a.ncols() != n {
        return svd_norm(a);
    }
    lanczos_norm(a).unwrap_or_else(|| svd_norm(a))
}

pub fn svd_norm(a: &Matrix) -> f64 {
    if a.iter().all(|v| *v == ZERO) {
        return 0.0;
    }
    match a.svd(false, false) {
        Ok((_, s, _)) => s.iter().copied().fold(0.0, f64::max),
        Err(_) => frobenius(a),
    }
}

fn lanczos_norm(a: &Matrix) -> Option<f64> {
    let n = a.nrows();
    let ah = dagger(a);
    let max_iter = n.min(120);
    // deterministic start vector with no special structure
    let mut q = Array1::from_shape_fn(n, |i| C64::new(1.0 + 0.37 * ((i * 7919) % 101) as f64 / 101.0, 0.0));
    let q_norm = norm2(&q);
    if q_norm == 0.0 {
        return Some(0.0);
    }
    q.mapv_inplace(|v| v / q_norm);
    let mut basis: Vec<Array1<C64>> = vec![q];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut last = f64::NAN;
    for k in 0..max_iter {
        let mut w = ah.dot(&a.dot(&basis[k]));
        alpha.push(basis[k].iter().zip(&w).map(|(x, y)| (x.conj() * y).re).sum());
        for _ in 0..2 {
            for v in &basis {
                let c: C64 = v.iter().zip(&w).map(|(x, y)| x.conj() * y).sum();
                w.zip_mut_with(v, |wi, vi| *wi -= c * vi);
            }
        }
        let b = norm2(&w);
        let lam = tridiag_max(&alpha, &beta);
        let converged = (lam - last).abs() <= NORM_RTOL * lam.abs();
        if b <= 1e-14 * lam.abs().max(1e-300) || k + 1 == n {
            return Some(lam.max(0.0).sqrt());
        }
        if converged && k >= 4 {
            return Some(lam.max(0.0).sqrt());
        }
        last = lam;
        beta.push(b);
        basis.push(w.mapv(|v| v / b));
    }
    None
}

fn tridiag_max(alpha: &[f64], beta: &[f64]) -> f64 {
    let k = alpha.len();
    let mut t = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        t[[i, i]] = alpha[i];
        if i + 1 < k {
            t[[i, i + 1]] = beta[i];
            t[[i + 1, i]] = beta[i];
        }
    }
    match t.eigh(UPLO::Lower) {
        Ok((w, _)) => w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Err(_) => f64::NAN,
    }
}

/// Column-stacked operator together with its support.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperKet {
    support: Region,
    dims: Vec<usize>,
    vector: Array1<C64>,
}

impl SuperKet {
    pub fn new(support: Region, dims: Vec<usize>, vector: Array1<C64>) -> Result<Self> {
        let d: usize = dims.iter().product();
        if dims.len() != support.len() {
            return Err(Error::BadShape("support and dims disagree".into()));
        }
        if vector.len() != d * d {
            return Err(Error::BadShape(format!(
                "superket length {} is not {}²",
                vector.len(),
                d
            )));
        }
        Ok(Self {
            support,
            dims,
            vector,
        })
    }

    pub fn support(&self) -> &Region {
        &self.support
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn vector(&self) -> &Array1<C64> {
        &self.vector
    }

    pub fn vector_mut(&mut self) -> &mut Array1<C64> {
        &mut self.vector
    }

    pub fn into_vector(self) -> Array1<C64> {
        self.vector
    }

    pub fn len(&self) -> usize {
        self.vector.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vector.is_empty()
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.vector)
    }

    /// `⟨⟨self|other⟩⟩ = Tr(A† B)`.
    pub fn inner(&self, other: &SuperKet) -> Result<C64> {
        if self.support != other.support {
            return Err(Error::BadSupport {
                support: other.support.sites().to_vec(),
                target: self.support.sites().to_vec(),
            });
        }
        Ok(self.vector.iter().zip(&other.vector).map(|(a, b)| a.conj() * b).sum())
    }
}

pub fn vec(op: &LocalOperator) -> SuperKet {
    SuperKet {
        support: op.support.clone(),
        dims: op.dims.clone(),
        vector: vec_matrix(&op.matrix),
    }
}

pub fn unvec(sk: &SuperKet) -> Result<LocalOperator> {
    let m = unvec_matrix(&sk.vector)?;
    LocalOperator::new(sk.support.clone(), sk.dims.clone(), m)
}

pub fn vec_matrix(m: &Matrix) -> Array1<C64> {
    m.t().iter().copied().collect()
}

pub fn unvec_matrix(v: &Array1<C64>) -> Result<Matrix> {
    let d = (v.len() as f64).sqrt().round() as usize;
    if d * d != v.len() {
        return Err(Error::BadShape(format!("length {} is not a perfect square", v.len())));
    }
    Ok(Matrix::from_shape_vec((d, d).f(), v.to_vec()).expect("square shape"))
}

/// Hilbert-Schmidt inner product `Tr(A† B)`.
pub fn hs_inner(a: &Matrix, b: &Matrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn dagger(m: &Matrix) -> Matrix {
    m.t().mapv(|v| v.conj())
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Matrix::zeros((ar * br, ac * bc));
    for ((i, j), &v) in a.indexed_iter() {
        if v == ZERO {
            continue;
        }
        out.slice_mut(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc])
            .assign(&b.mapv(|x| x * v));
    }
    out
}

pub fn norm2(v: &Array1<C64>) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn frobenius(m: &Matrix) -> f64 {
    m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Single-site operator by name: `I`, `X`, `Y`, `Z`, `S+`, `S-`.
///
/// `S-` lowers |1⟩ to |0⟩, so amplitude damping relaxes to |0⟩⟨0|.
pub fn named(name: &str) -> Option<Matrix> {
    let m = |a: [C64; 4]| Matrix::from_shape_vec((2, 2), a.to_vec()).unwrap();
    Some(match name {
        "I" => m([ONE, ZERO, ZERO, ONE]),
        "X" => m([ZERO, ONE, ONE, ZERO]),
        "Y" => m([ZERO, -I, I, ZERO]),
        "Z" => m([ONE, ZERO, ZERO, -ONE]),
        "S+" => m([ZERO, ZERO, ONE, ZERO]),
        "S-" | "S−" => m([ZERO, ONE, ZERO, ZERO]),
        _ => return None,
    })
}

pub fn pauli_x() -> Matrix {
    named("X").unwrap()
}

pub fn pauli_y() -> Matrix {
    named("Y").unwrap()
}

pub fn pauli_z() -> Matrix {
    named("Z").unwrap()
}

pub fn sigma_minus() -> Matrix {
    named("S-").unwrap()
}

pub fn sigma_plus() -> Matrix {
    named("S+").unwrap()
}

/// Single-site operator `m` on site `x` of `lattice`.
pub fn site_op(lattice: &Lattice, x: Site, m: Matrix) -> Result<LocalOperator> {
    LocalOperator::on(lattice, Region::single(x), m)
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

/// Ginibre matrix with unit-variance complex Gaussian entries.
pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Matrix {
    Matrix::from_shape_simple_fn((dim, dim), || complex_normal(rng))
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Matrix {
    let g = random_matrix(rng, dim);
    (&g + &dagger(&g)).mapv(|v| v * 0.5)
}

/// Haar-random unitary (QR of a Ginibre matrix with phase correction).
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Matrix {
    let g = random_matrix(rng, dim);
    let (mut q, r) = g.qr().expect("QR of a Ginibre matrix");
    for j in 0..dim {
        let d = r[[j, j]];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        q.column_mut(j).mapv_inplace(|v| v * phase);
    }
    q
}

/// Random full-rank density matrix `G G† / Tr(G G†)`.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Matrix {
    let g = random_matrix(rng, dim);
    let rho = g.dot(&dagger(&g));
    let tr = rho.diag().sum();
    rho.mapv(|v| v / tr)
}

/// Random operator on `support` normalized to unit spectral norm.
pub fn random_operator<R: Rng + ?Sized>(rng: &mut R, support: Region, dims: Vec<usize>) -> Result<LocalOperator> {
    let dim = dims.iter().product();
    let g = random_matrix(rng, dim);
    let n = matrix_norm(&g);
    LocalOperator::new(support, dims, g.mapv(|v| v / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::cell_rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn chain(n: usize) -> Lattice {
        Lattice::chain(n, 2).unwrap()
    }

    #[test]
    fn embed_middle_site() {
        let l = chain(3);
        let x = site_op(&l, 1, pauli_x()).unwrap();
        let e = x.embed(&l.all(), l.site_dims()).unwrap();
        let expect = kron(&kron(&Matrix::eye(2), &pauli_x()), &Matrix::eye(2));
        assert_eq!(e.matrix(), &expect);
    }

    #[test]
    fn embed_into_own_support() {
        let l = chain(3);
        let z = site_op(&l, 2, pauli_z()).unwrap();
        assert_eq!(z.embed(&Region::single(2), &[2]).unwrap(), z);
    }

    #[test]
    fn embed_outside_support_fails() {
        let l = chain(3);
        let z = site_op(&l, 2, pauli_z()).unwrap();
        assert!(matches!(
            z.embed(&Region::new([0, 1]), &[2, 2]),
            Err(Error::BadSupport { .. })
        ));
    }

    // Brute force over all basis states: bit k of an index is site (3 - k).
    #[test]
    fn embed_interleaved_matches_bijection() {
        let l = chain(4);
        let zz = LocalOperator::product(Region::new([1, 3]), &[pauli_z(), pauli_z()]).unwrap();
        let e = zz.embed(&l.all(), l.site_dims()).unwrap();
        let bit = |idx: usize, site: usize| (idx >> (3 - site)) & 1;
        for r in 0..16 {
            for c in 0..16 {
                let same_rest = bit(r, 0) == bit(c, 0) && bit(r, 2) == bit(c, 2);
                let expect = if same_rest {
                    let i = bit(r, 1) * 2 + bit(r, 3);
                    let j = bit(c, 1) * 2 + bit(c, 3);
                    zz.matrix()[[i, j]]
                } else {
                    ZERO
                };
                assert_eq!(e.matrix()[[r, c]], expect, "({r},{c})");
            }
        }
    }

    #[test]
    fn norms_of_simple_operators() {
        let l = chain(1);
        assert_abs_diff_eq!(op_norm(&site_op(&l, 0, pauli_x()).unwrap()), 1.0, epsilon = 1e-14);
        let m = Matrix::from_shape_vec((2, 2), vec![ZERO, C64::new(2.0, 0.0), ZERO, ZERO]).unwrap();
        assert_abs_diff_eq!(op_norm(&site_op(&l, 0, m).unwrap()), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn lanczos_norm_matches_svd() {
        let mut rng = cell_rng(1, 0);
        for dim in [8, 64, 128, 256] {
            let a = random_matrix(&mut rng, dim);
            let exact = svd_norm(&a);
            let got = matrix_norm(&a);
            assert!((got - exact).abs() <= 1e-10 * exact, "dim {dim}: {got} vs {exact}");
        }
        // rank-deficient and normal cases
        let mut d = Matrix::zeros((80, 80));
        d[[3, 3]] = C64::new(0.5, 0.0);
        d[[7, 7]] = C64::new(0.0, -2.0);
        assert_abs_diff_eq!(matrix_norm(&d), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn pauli_commutator() {
        let l = chain(1);
        let x = site_op(&l, 0, pauli_x()).unwrap();
        let y = site_op(&l, 0, pauli_y()).unwrap();
        let c = commutator(&x, &y).unwrap();
        let expect = pauli_z().mapv(|v| v * C64::new(0.0, 2.0));
        assert!(max_abs_diff(c.matrix(), &expect) < 1e-15);
        assert_abs_diff_eq!(op_norm(&c), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn disjoint_supports_commute() {
        let l = chain(4);
        let a = site_op(&l, 0, pauli_x()).unwrap();
        let b = site_op(&l, 3, pauli_y()).unwrap();
        let c = commutator(&a, &b).unwrap();
        assert_eq!(c.support(), &Region::new([0, 3]));
        assert_eq!(op_norm(&c), 0.0);
    }

    #[test]
    fn random_commutator_matches_products() {
        let mut rng = cell_rng(2, 0);
        let a = random_operator(&mut rng, Region::new([0, 1]), vec![2, 2]).unwrap();
        let b = random_operator(&mut rng, Region::new([0, 1]), vec![2, 2]).unwrap();
        let c = commutator(&a, &b).unwrap();
        let ab = a.matrix().dot(b.matrix());
        let ba = b.matrix().dot(a.matrix());
        assert!(max_abs_diff(c.matrix(), &(ab - ba)) < 1e-14);
    }

    #[test]
    fn vec_of_identity() {
        let id = LocalOperator::identity(Region::single(0), vec![2]).unwrap();
        let v = vec(&id);
        assert_eq!(v.vector().to_vec(), vec![ONE, ZERO, ZERO, ONE]);
    }

    #[test]
    fn vec_is_column_stacking() {
        let m = Matrix::from_shape_fn((3, 3), |(r, c)| C64::new((r + 10 * c) as f64, 0.0));
        let v = vec_matrix(&m);
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(v[r + 3 * c], m[[r, c]]);
            }
        }
    }

    #[test]
    fn unvec_rejects_non_square_length() {
        let sk = Array1::from_elem(5, ONE);
        assert!(matches!(unvec_matrix(&sk), Err(Error::BadShape(_))));
        assert!(SuperKet::new(Region::single(0), vec![2], sk).is_err());
    }

    #[test]
    fn hs_inner_matches_trace() {
        let mut rng = cell_rng(3, 0);
        for _ in 0..10 {
            let a = random_matrix(&mut rng, 8);
            let b = random_matrix(&mut rng, 8);
            let tr = dagger(&a).dot(&b).diag().sum();
            let va = vec_matrix(&a);
            let vb = vec_matrix(&b);
            let ip: C64 = va.iter().zip(&vb).map(|(x, y)| x.conj() * y).sum();
            assert!((tr - ip).norm() < 1e-12 * tr.norm().max(1.0));
            assert!((hs_inner(&a, &b) - tr).norm() < 1e-12 * tr.norm().max(1.0));
        }
    }

    #[test]
    fn partial_trace_of_product() {
        let l = chain(3);
        let a = site_op(&l, 0, pauli_z()).unwrap();
        let b = site_op(&l, 2, pauli_x()).unwrap();
        let ab = a.mul(&b).unwrap().embed(&l.all(), l.site_dims()).unwrap();
        let reduced = ab.partial_trace(&Region::new([0, 2])).unwrap();
        let expect = kron(&pauli_z(), &pauli_x()).mapv(|v| v * 2.0);
        assert!(max_abs_diff(reduced.matrix(), &expect) < 1e-15);
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = cell_rng(4, 0);
        let u = random_unitary(&mut rng, 6);
        assert!(max_abs_diff(&u.dot(&dagger(&u)), &Matrix::eye(6)) < 1e-12);
    }

    fn small_matrix() -> impl Strategy<Value = Matrix> {
        (any::<u64>(), 1usize..=8).prop_map(|(seed, dim)| random_matrix(&mut cell_rng(seed, 0), dim))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn commutator_norm_bounded(seed in any::<u64>()) {
            let mut rng = cell_rng(seed, 0);
            let a = LocalOperator::new(Region::new([0, 1]), vec![2, 2], random_matrix(&mut rng, 4)).unwrap();
            let b = LocalOperator::new(Region::new([1, 2]), vec![2, 2], random_matrix(&mut rng, 4)).unwrap();
            let c = commutator(&a, &b).unwrap();
            prop_assert!(op_norm(&c) <= 2.0 * op_norm(&a) * op_norm(&b) * (1.0 + 1e-12));
        }

        #[test]
        fn norm_unitarily_invariant(seed in any::<u64>(), dim in 1usize..=8) {
            let mut rng = cell_rng(seed, 0);
            let a = random_matrix(&mut rng, dim);
            let u = random_unitary(&mut rng, dim);
            let b = u.dot(&a).dot(&dagger(&u));
            let (na, nb) = (matrix_norm(&a), matrix_norm(&b));
            prop_assert!((na - nb).abs() <= 1e-10 * na);
        }

        #[test]
        fn vec_sandwich_identity(seed in any::<u64>(), dim in 1usize..=5) {
            let mut rng = cell_rng(seed, 0);
            let a = random_matrix(&mut rng, dim);
            let x = random_matrix(&mut rng, dim);
            let b = random_matrix(&mut rng, dim);
            let lhs = vec_matrix(&a.dot(&x).dot(&b));
            let rhs = kron(&b.t().to_owned(), &a).dot(&vec_matrix(&x));
            let err = lhs.iter().zip(&rhs).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
            prop_assert!(err <= 1e-12 * (1.0 + norm2(&lhs)));
        }

        #[test]
        fn vec_roundtrip(m in small_matrix()) {
            prop_assert_eq!(unvec_matrix(&vec_matrix(&m)).unwrap(), m);
        }
    }
}
