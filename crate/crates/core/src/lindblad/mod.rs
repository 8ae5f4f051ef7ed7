//! Local Lindblad terms and the generator they sum to.
//!
//! A generator keeps its term list, a per-term weight and the Hilbert space
//! it acts on. The sparse superoperator matrix and the matrix-free action are
//! both derived from the terms on demand.
//!
//! Terms handed to [`assemble`] must satisfy `b(X) <= 1`; [`normalize`]
//! rescales them and reports the factor `s` as `time_scale`. Every
//! time or rate exposed by the propagators and the spectral code is in
//! physical units, i.e. the normalized matrix is used with `t · s`.

mod action;

use std::fmt;
use std::sync::OnceLock;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use action::LindbladAction;

use crate::error::{Error, Result};
use crate::lattice::{reachable, Lattice, Region};
use crate::operator::{dagger, kron, op_norm, Layout, LocalOperator, Matrix, SuperKet};
use crate::sparse::{Coo, CsrMatrix, LinearMap};
use crate::{C64, I, ZERO};

/// Largest superoperator dimension for which the explicit sparse matrix is
/// built (eight qubits).
pub const SPARSE_SUPEROP_MAX: usize = 1 << 16;
/// Largest superoperator dimension for dense work (six qubits).
pub const DENSE_MAX: usize = 4096;

const HERMITIAN_TOL: f64 = 1e-12;
const NORMALIZED_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Picture {
    Schroedinger,
    Heisenberg,
}

impl Picture {
    pub fn dual(self) -> Self {
        match self {
            Picture::Schroedinger => Picture::Heisenberg,
            Picture::Heisenberg => Picture::Schroedinger,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalTerm {
    support: Region,
    dims: Vec<usize>,
    hamiltonian: Matrix,
    jumps: Vec<Matrix>,
}

/// Validate a term. `h` and each jump may live on any subset of `support`.
pub fn build_local_term(
    lattice: &Lattice,
    support: &Region,
    h: Option<&LocalOperator>,
    jumps: &[LocalOperator],
    d_star: f64,
) -> Result<LocalTerm> {
    let support = lattice.region(support.sites().iter().copied())?;
    let diameter = lattice.diameter(&support)?;
    if diameter > d_star {
        return Err(Error::OversizedSupport { diameter, d_star });
    }
    let dims = lattice.dims_of(&support);
    let dim: usize = dims.iter().product();
    let hamiltonian = match h {
        Some(h) => h.embed(&support, &dims)?.into_matrix(),
        None => Matrix::zeros((dim, dim)),
    };
    let jumps = jumps
        .iter()
        .map(|l| l.embed(&support, &dims).map(LocalOperator::into_matrix))
        .collect::<Result<Vec<_>>>()?;
    LocalTerm::new(support, dims, hamiltonian, jumps)
}

impl LocalTerm {
    /// Term from matrices already on `support`. Hermiticity is enforced to
    /// `1e-12` and then symmetrized.
    pub fn new(support: Region, dims: Vec<usize>, hamiltonian: Matrix, jumps: Vec<Matrix>) -> Result<Self> {
        let h = LocalOperator::new(support.clone(), dims.clone(), hamiltonian)?;
        let deviation = h.hermiticity_error();
        if deviation > HERMITIAN_TOL {
            return Err(Error::NonHermitianH { deviation });
        }
        let m = h.into_matrix();
        let hamiltonian = (&m + &dagger(&m)).mapv(|v| v * 0.5);
        let dim = hamiltonian.nrows();
        if let Some(l) = jumps.iter().find(|l| l.dim() != (dim, dim)) {
            return Err(Error::BadShape(format!("jump {:?} on a support of dimension {dim}", l.dim())));
        }
        Ok(Self {
            support,
            dims,
            hamiltonian,
            jumps,
        })
    }

    pub fn support(&self) -> &Region {
        &self.support
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn hamiltonian(&self) -> &Matrix {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[Matrix] {
        &self.jumps
    }

    /// `2‖H‖ + 2 Σ ‖L_a‖²`, an upper bound on the induced norm of the term.
    pub fn norm_bound(&self) -> f64 {
        let h = op_norm(&self.op(&self.hamiltonian));
        let l: f64 = self.jumps.iter().map(|l| op_norm(&self.op(l)).powi(2)).sum();
        2.0 * h + 2.0 * l
    }

    fn op(&self, m: &Matrix) -> LocalOperator {
        LocalOperator::new(self.support.clone(), self.dims.clone(), m.clone()).expect("term operator shape")
    }

    /// `H → H/s`, `L → L/√s`, which divides the superoperator by `s`.
    pub fn rescaled(&self, s: f64) -> Self {
        let r = s.sqrt();
        Self {
            support: self.support.clone(),
            dims: self.dims.clone(),
            hamiltonian: self.hamiltonian.mapv(|v| v / s),
            jumps: self.jumps.iter().map(|l| l.mapv(|v| v / r)).collect(),
        }
    }

    pub fn is_unitary(&self) -> bool {
        self.jumps.iter().all(|l| l.iter().all(|v| *v == ZERO))
    }

    /// `Σ L†L` on the support.
    fn dissipator_weight(&self) -> Matrix {
        let dim = self.dim();
        self.jumps
            .iter()
            .fold(Matrix::zeros((dim, dim)), |acc, l| acc + dagger(l).dot(l))
    }

    /// Dense `d_X² × d_X²` superoperator of the term.
    pub fn superoperator(&self, picture: Picture) -> Matrix {
        let d = self.dim();
        let id = Matrix::eye(d);
        let k = self.dissipator_weight();
        let h_eff = &self.hamiltonian - &k.mapv(|v| v * 0.5 * I);
        // vec(A X B) = (Bᵀ ⊗ A) vec(X)
        let mut s = match picture {
            Picture::Schroedinger => {
                kron(&id, &h_eff).mapv(|v| -I * v) + kron(&h_eff.mapv(|v| v.conj()), &id).mapv(|v| I * v)
            }
            Picture::Heisenberg => {
                let h_eff_dag = dagger(&h_eff);
                kron(&id, &h_eff_dag).mapv(|v| I * v) + kron(&h_eff.t().to_owned(), &id).mapv(|v| -I * v)
            }
        };
        for l in &self.jumps {
            s = s + match picture {
                Picture::Schroedinger => kron(&l.mapv(|v| v.conj()), l),
                Picture::Heisenberg => kron(&l.t().to_owned(), &dagger(l)),
            };
        }
        s
    }

    /// Apply the term to an operator whose support contains the term's.
    pub fn apply(&self, picture: Picture, op: &LocalOperator) -> Result<LocalOperator> {
        let target = op.support().union(&self.support);
        let mut dims = Vec::with_capacity(target.len());
        for &x in target.sites() {
            dims.push(match self.support.position(x) {
                Some(p) => self.dims[p],
                None => op.dims()[op.support().position(x).unwrap()],
            });
        }
        let o = op.embed(&target, &dims)?.into_matrix();
        let lift = |m: &Matrix| self.op(m).embed(&target, &dims).map(LocalOperator::into_matrix);
        let h = lift(&self.hamiltonian)?;
        let mut out = match picture {
            Picture::Schroedinger => (h.dot(&o) - o.dot(&h)).mapv(|v| -I * v),
            Picture::Heisenberg => (h.dot(&o) - o.dot(&h)).mapv(|v| I * v),
        };
        for l in &self.jumps {
            let l = lift(l)?;
            let ld = dagger(&l);
            let ldl = ld.dot(&l);
            let sandwich = match picture {
                Picture::Schroedinger => l.dot(&o).dot(&ld),
                Picture::Heisenberg => ld.dot(&o).dot(&l),
            };
            out = out + sandwich - (ldl.dot(&o) + o.dot(&ldl)).mapv(|v| v * 0.5);
        }
        LocalOperator::new(target, dims, out)
    }
}

/// Divide every term by `s = max_X b(X)` when `s > 1`.
pub fn normalize(terms: &[LocalTerm]) -> (Vec<LocalTerm>, f64) {
    let s = terms.iter().map(LocalTerm::norm_bound).fold(0.0, f64::max);
    if s <= 1.0 {
        return (terms.to_vec(), 1.0);
    }
    (terms.iter().map(|t| t.rescaled(s)).collect(), s)
}

pub struct AssembledGenerator {
    lattice: Lattice,
    sites: Region,
    dims: Vec<usize>,
    terms: Vec<LocalTerm>,
    weights: Vec<f64>,
    picture: Picture,
    time_scale: f64,
    action: OnceLock<LindbladAction>,
    matrix: OnceLock<CsrMatrix>,
}

impl Clone for AssembledGenerator {
    fn clone(&self) -> Self {
        Self {
            lattice: self.lattice.clone(),
            sites: self.sites.clone(),
            dims: self.dims.clone(),
            terms: self.terms.clone(),
            weights: self.weights.clone(),
            picture: self.picture,
            time_scale: self.time_scale,
            action: OnceLock::new(),
            matrix: OnceLock::new(),
        }
    }
}

impl fmt::Debug for AssembledGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AssembledGenerator")
            .field("sites", &self.sites)
            .field("terms", &self.terms.len())
            .field("picture", &self.picture)
            .field("time_scale", &self.time_scale)
            .finish()
    }
}

/// Generator over the whole lattice from normalized terms.
pub fn assemble(lattice: &Lattice, terms: &[LocalTerm], picture: Picture) -> Result<AssembledGenerator> {
    assemble_scaled(lattice, terms, picture, 1.0)
}

/// As [`assemble`], recording that the terms were divided by `time_scale`.
pub fn assemble_scaled(
    lattice: &Lattice,
    terms: &[LocalTerm],
    picture: Picture,
    time_scale: f64,
) -> Result<AssembledGenerator> {
    for (index, term) in terms.iter().enumerate() {
        lattice.region(term.support.sites().iter().copied())?;
        for (p, &x) in term.support.sites().iter().enumerate() {
            if lattice.site_dim(x) != term.dims[p] {
                return Err(Error::BadShape(format!("term {index} disagrees on the dimension of site {x}")));
            }
        }
        let bound = term.norm_bound();
        if bound > 1.0 + NORMALIZED_TOL {
            return Err(Error::UnnormalizedTerms { index, bound });
        }
    }
    let sites = lattice.all();
    Ok(AssembledGenerator {
        dims: lattice.dims_of(&sites),
        lattice: lattice.clone(),
        sites,
        weights: vec![1.0; terms.len()],
        terms: terms.to_vec(),
        picture,
        time_scale,
        action: OnceLock::new(),
        matrix: OnceLock::new(),
    })
}

/// Normalize and assemble in one step.
pub fn assemble_normalized(lattice: &Lattice, terms: &[LocalTerm], picture: Picture) -> Result<AssembledGenerator> {
    let (terms, s) = normalize(terms);
    assemble_scaled(lattice, &terms, picture, s)
}

impl AssembledGenerator {
    fn derived(&self, sites: Region, terms: Vec<LocalTerm>, weights: Vec<f64>, picture: Picture) -> Self {
        Self {
            dims: self.lattice.dims_of(&sites),
            lattice: self.lattice.clone(),
            sites,
            terms,
            weights,
            picture,
            time_scale: self.time_scale,
            action: OnceLock::new(),
            matrix: OnceLock::new(),
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    /// Sites of the Hilbert space the generator acts on.
    pub fn sites(&self) -> &Region {
        &self.sites
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn terms(&self) -> &[LocalTerm] {
        &self.terms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn picture(&self) -> Picture {
        self.picture
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    /// Hilbert-space dimension.
    pub fn hilbert_dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Superoperator dimension.
    pub fn dim(&self) -> usize {
        self.hilbert_dim().pow(2)
    }

    /// Terms with nonzero weight.
    pub fn active_terms(&self) -> impl Iterator<Item = (&LocalTerm, f64)> {
        self.terms.iter().zip(self.weights.iter().copied()).filter(|(_, w)| *w != 0.0)
    }

    pub fn max_norm_bound(&self) -> f64 {
        self.active_terms().map(|(t, w)| w * t.norm_bound()).fold(0.0, f64::max)
    }

    /// The same terms in the other picture.
    pub fn with_picture(&self, picture: Picture) -> Self {
        self.derived(self.sites.clone(), self.terms.clone(), self.weights.clone(), picture)
    }

    /// `(ℒ_∩A, ℒ_Ā)`: terms whose support meets `a`, and the rest.
    pub fn split_at_region(&self, a: &Region) -> (Self, Self) {
        let (mut cap, mut bar) = ((vec![], vec![]), (vec![], vec![]));
        for (t, &w) in self.terms.iter().zip(&self.weights) {
            let side = if t.support.intersects(a) { &mut cap } else { &mut bar };
            side.0.push(t.clone());
            side.1.push(w);
        }
        (
            self.derived(self.sites.clone(), cap.0, cap.1, self.picture),
            self.derived(self.sites.clone(), bar.0, bar.1, self.picture),
        )
    }

    /// Terms supported inside `r`, i.e. `ℒ_R`.
    pub fn restricted_part(&self, r: &Region) -> Self {
        let (terms, weights) = self
            .terms
            .iter()
            .zip(&self.weights)
            .filter(|(t, _)| t.support.is_subset(r))
            .map(|(t, &w)| (t.clone(), w))
            .unzip();
        self.derived(self.sites.clone(), terms, weights, self.picture)
    }

    /// `ℒ(η) = ℒ - ℒ_R + η ℒ_R`; terms with weight zero are dropped.
    pub fn interpolate(&self, r: &Region, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Validation {
                field: "eta".into(),
                line: None,
                reason: format!("{eta} is outside [0, 1]"),
            });
        }
        let (terms, weights) = self
            .terms
            .iter()
            .zip(&self.weights)
            .filter_map(|(t, &w)| {
                let w = if t.support.is_subset(r) { w * eta } else { w };
                (w != 0.0).then(|| (t.clone(), w))
            })
            .unzip();
        Ok(self.derived(self.sites.clone(), terms, weights, self.picture))
    }

    /// Sites linked to `region` through chains of overlapping active terms.
    pub fn closure(&self, region: &Region) -> Region {
        let supports: Vec<&Region> = self.active_terms().map(|(t, _)| &t.support).collect();
        reachable(self.lattice.len(), &supports, region)
            .intersection(&self.sites)
            .union(&region.intersection(&self.sites))
    }

    /// Generator on the sub-lattice `region`. No active term may straddle
    /// the boundary of `region`.
    pub fn restrict(&self, region: &Region) -> Result<Self> {
        if !region.is_subset(&self.sites) {
            return Err(Error::BadSupport {
                support: region.sites().to_vec(),
                target: self.sites.sites().to_vec(),
            });
        }
        let mut terms = Vec::new();
        let mut weights = Vec::new();
        for (t, w) in self.active_terms() {
            if t.support.is_subset(region) {
                terms.push(t.clone());
                weights.push(w);
            } else if t.support.intersects(region) {
                return Err(Error::BadSupport {
                    support: t.support.sites().to_vec(),
                    target: region.sites().to_vec(),
                });
            }
        }
        Ok(self.derived(region.clone(), terms, weights, self.picture))
    }

    /// Matrix-free action of the (normalized) generator.
    pub fn action(&self) -> &LindbladAction {
        self.action.get_or_init(|| self.build_action())
    }

    fn build_action(&self) -> LindbladAction {
        let d = self.hilbert_dim();
        let mut h_eff = Coo::default();
        let mut jumps = Vec::new();
        for (t, w) in self.active_terms() {
            let layout = Layout::new(&self.sites, &self.dims, &t.support).expect("term inside generator sites");
            let k = t.dissipator_weight();
            let local = &t.hamiltonian - &k.mapv(|v| v * 0.5 * I);
            push_embedded(&mut h_eff, &local.mapv(|v| v * w), &layout);
            for l in &t.jumps {
                let mut coo = Coo::default();
                push_embedded(&mut coo, l, &layout);
                jumps.push((w, CsrMatrix::from_coo(d, d, &coo)));
            }
        }
        let h_eff = CsrMatrix::from_coo(d, d, &h_eff);
        LindbladAction::new(d, h_eff, jumps, self.picture == Picture::Heisenberg)
    }

    /// Explicit sparse superoperator, assembled term by term from Kronecker
    /// embeddings of the local superoperators.
    pub fn matrix(&self) -> Result<&CsrMatrix> {
        let dim = self.dim();
        if dim > SPARSE_SUPEROP_MAX {
            return Err(Error::DimensionTooLarge {
                dim,
                max: SPARSE_SUPEROP_MAX,
            });
        }
        Ok(self.matrix.get_or_init(|| self.build_matrix()))
    }

    fn build_matrix(&self) -> CsrMatrix {
        let d = self.hilbert_dim();
        let mut coo = Coo::default();
        for (t, w) in self.active_terms() {
            let layout = Layout::new(&self.sites, &self.dims, &t.support).expect("term inside generator sites");
            let local = t.superoperator(self.picture);
            let dx = t.dim();
            for ((li, lj), &v) in local.indexed_iter() {
                if v == ZERO {
                    continue;
                }
                let (ri, ci) = (li % dx, li / dx);
                let (rj, cj) = (lj % dx, lj / dx);
                let row0 = layout.inner[ri] + d * layout.inner[ci];
                let col0 = layout.inner[rj] + d * layout.inner[cj];
                let v = v * w;
                for &er in &layout.rest {
                    for &ec in &layout.rest {
                        let off = er + d * ec;
                        coo.push(row0 + off, col0 + off, v);
                    }
                }
            }
        }
        CsrMatrix::from_coo(d * d, d * d, &coo)
    }

    /// Dense superoperator (normalized units).
    pub fn dense(&self) -> Result<Array2<C64>> {
        let dim = self.dim();
        if dim > DENSE_MAX {
            return Err(Error::DimensionTooLarge { dim, max: DENSE_MAX });
        }
        Ok(self.matrix()?.to_dense())
    }

    /// Normalized generator applied to a superket on the generator's sites.
    pub fn apply(&self, sk: &SuperKet) -> Result<SuperKet> {
        self.check_superket(sk)?;
        let y = self.action().apply_vec(sk.vector().as_slice().expect("contiguous"));
        SuperKet::new(self.sites.clone(), self.dims.clone(), y.into())
    }

    pub(crate) fn check_superket(&self, sk: &SuperKet) -> Result<()> {
        if sk.support() != &self.sites {
            return Err(Error::BadSupport {
                support: sk.support().sites().to_vec(),
                target: self.sites.sites().to_vec(),
            });
        }
        Ok(())
    }

    /// `max |ℒ[I]|` in the Heisenberg picture (zero for a unital map).
    pub fn unitality_residual(&self) -> f64 {
        let heis = if self.picture == Picture::Heisenberg {
            None
        } else {
            Some(self.with_picture(Picture::Heisenberg))
        };
        let g = heis.as_ref().unwrap_or(self);
        let d = g.hilbert_dim();
        let id = crate::operator::vec_matrix(&Matrix::eye(d));
        let y = g.action().apply_vec(id.as_slice().unwrap());
        y.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

impl LinearMap for AssembledGenerator {
    fn dim(&self) -> usize {
        AssembledGenerator::dim(self)
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.action().apply(x, y)
    }
}

fn push_embedded(coo: &mut Coo, local: &Matrix, layout: &Layout) {
    for ((i, j), &v) in local.indexed_iter() {
        if v == ZERO {
            continue;
        }
        let (r0, c0) = (layout.inner[i], layout.inner[j]);
        for &e in &layout.rest {
            coo.push(r0 + e, c0 + e, v);
        }
    }
}

/// Identity superket on the given sites.
pub fn identity_superket(sites: &Region, dims: &[usize]) -> SuperKet {
    let d: usize = dims.iter().product();
    let v = crate::operator::vec_matrix(&Matrix::eye(d));
    SuperKet::new(sites.clone(), dims.to_vec(), v).expect("identity shape")
}
