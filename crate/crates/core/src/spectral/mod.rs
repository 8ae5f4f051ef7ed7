//! Stationary states, spectral gaps, eigenvector conditioning and the
//! exponential convergence bound `‖e^{ℒt} − |I⟩⟩⟨⟨π|‖ ≤ κ e^{−Δt+1}`.
//!
//! Eigenvalues, gaps and rates are reported in physical units (the
//! normalized matrix spectrum times `time_scale`).

use ndarray::{s, Array1, Array2};
use ndarray_linalg::{Eig, EigVals, SVD};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lindblad::{AssembledGenerator, Picture, DENSE_MAX};
use crate::operator::{dagger, matrix_norm, unvec_matrix, vec_matrix, LocalOperator, Matrix};
use crate::propagate::expm_dense;
use crate::solve::{bicgstab, Bordered, SolveOptions, SolveStats};
use crate::sparse::LinearMap;
use crate::C64;

/// Relative singular-value threshold defining the kernel.
pub const KERNEL_RTOL: f64 = 1e-11;
/// Gaps below this are reported as vanishing.
pub const GAP_TOL: f64 = 1e-9;
/// Eigenvector condition numbers above this are treated as defective.
pub const DEFECTIVE_CONDITION: f64 = 1e12;
const STATIONARY_RESIDUAL: f64 = 1e-9;
const CLUSTER_RTOL: f64 = 1e-8;
const BOUND_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    /// Sorted by descending real part.
    #[serde(serialize_with = "serialize_complex")]
    pub eigenvalues: Vec<C64>,
    pub gap: f64,
    #[serde(skip)]
    pub stationary_state: LocalOperator,
    pub conditioning: f64,
    pub relaxation_time: f64,
    pub unique: bool,
    pub kernel_dim: usize,
}

fn serialize_complex<S: serde::Serializer>(v: &[C64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

fn schroedinger(gen: &AssembledGenerator) -> std::borrow::Cow<'_, AssembledGenerator> {
    match gen.picture() {
        Picture::Schroedinger => std::borrow::Cow::Borrowed(gen),
        Picture::Heisenberg => std::borrow::Cow::Owned(gen.with_picture(Picture::Schroedinger)),
    }
}

fn sort_descending_real(v: &mut [C64]) {
    v.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
}

/// All eigenvalues of the dense generator, physical units, descending real
/// part.
pub fn eigenvalues(gen: &AssembledGenerator) -> Result<Vec<C64>> {
    let m = gen.dense()?;
    let mut ev: Vec<C64> = m.eigvals()?.iter().map(|&z| z * gen.time_scale()).collect();
    sort_descending_real(&mut ev);
    Ok(ev)
}

/// Kernel dimension by singular-value counting, and the right singular
/// vector of the smallest singular value.
pub fn kernel(m: &Matrix) -> Result<(usize, Array1<C64>)> {
    let (_, sv, vt) = m.svd(false, true)?;
    let vt = vt.expect("requested right singular vectors");
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let dim = sv.iter().filter(|&&s| s <= KERNEL_RTOL * smax).count();
    let last = sv.len() - 1;
    Ok((dim, vt.row(last).mapv(|z| z.conj())))
}

fn density_from_vector(v: &Array1<C64>) -> Result<Matrix> {
    let m = unvec_matrix(v)?;
    let tr = m.diag().sum();
    if tr.norm() < 1e-300 {
        return Err(Error::Linalg("kernel vector has zero trace".into()));
    }
    let m = m.mapv(|z| z / tr);
    Ok((&m + &dagger(&m)).mapv(|z| z * 0.5))
}

/// `‖ℒ[ρ]‖₂` of the vectorized image, physical units.
pub fn stationary_residual(gen: &AssembledGenerator, rho: &Matrix) -> f64 {
    let g = schroedinger(gen);
    let y = g.action().apply_vec(vec_matrix(rho).as_slice().expect("contiguous"));
    y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() * gen.time_scale()
}

fn into_operator(gen: &AssembledGenerator, rho: Matrix) -> Result<LocalOperator> {
    LocalOperator::new(gen.sites().clone(), gen.dims().to_vec(), rho)
}

/// Unit-trace density matrix spanning the kernel of the Schrödinger
/// generator. Dense for superoperator dimension ≤ 4096, iterative beyond.
pub fn stationary_state(gen: &AssembledGenerator) -> Result<LocalOperator> {
    if gen.dim() > DENSE_MAX {
        return stationary_state_iterative(gen, &SolveOptions::default()).map(|(rho, _)| rho);
    }
    let g = schroedinger(gen);
    let (dim, v) = kernel(&g.dense()?)?;
    if dim > 1 {
        return Err(Error::NonUniqueFixedPoint { kernel_dim: dim });
    }
    let rho = density_from_vector(&v)?;
    let residual = stationary_residual(gen, &rho);
    if residual > STATIONARY_RESIDUAL {
        return Err(Error::ConvergenceFailure {
            what: "stationary state",
            residual,
            tolerance: STATIONARY_RESIDUAL,
        });
    }
    into_operator(gen, rho)
}

/// Solve `ℒx − Tr(x)|0⟩⟨0| = −|0⟩⟨0|` with BiCGSTAB, trying a Jacobi
/// preconditioner first. Does not detect degenerate kernels.
pub fn stationary_state_iterative(gen: &AssembledGenerator, opts: &SolveOptions) -> Result<(LocalOperator, SolveStats)> {
    let g = schroedinger(gen);
    let action = g.action();
    let d = g.hilbert_dim();
    let bordered = Bordered { inner: action, d, c: 1.0 };
    let b = bordered.rhs();
    let inv_diag = bordered.inverse_diagonal(&action.diagonal());
    let (x, stats) = match bicgstab(&bordered, &b, None, Some(&inv_diag), opts) {
        Ok(r) => r,
        Err(Error::NoConvergence { iterations, residual }) => {
            log::info!("Jacobi-preconditioned solve stalled ({iterations} iterations, {residual:.2e}); retrying plain");
            drop(inv_diag);
            bicgstab(&bordered, &b, None, None, opts)?
        }
        Err(e) => return Err(e),
    };
    let rho = density_from_vector(&Array1::from(x))?;
    let residual = stationary_residual(gen, &rho);
    if residual > STATIONARY_RESIDUAL {
        return Err(Error::NoConvergence {
            iterations: stats.iterations,
            residual,
        });
    }
    Ok((into_operator(gen, rho)?, stats))
}

/// Gap from a sorted physical spectrum and the kernel dimension.
pub fn gap_from_spectrum(eigs: &[C64], kernel_dim: usize) -> Result<f64> {
    let scale = eigs.iter().map(|z| z.norm()).fold(1.0, f64::max);
    if eigs.iter().all(|z| z.re.abs() <= GAP_TOL * scale) {
        return Err(Error::GapBelowTolerance { gap: 0.0 });
    }
    if kernel_dim > 1 {
        return Err(Error::NonUniqueFixedPoint { kernel_dim });
    }
    let gap = eigs.get(1).map(|z| -z.re).unwrap_or(0.0);
    if gap < GAP_TOL {
        return Err(Error::GapBelowTolerance { gap });
    }
    Ok(gap)
}

/// `Δ = −Re λ₁` for the dense generator.
pub fn spectral_gap(gen: &AssembledGenerator) -> Result<f64> {
    let eigs = eigenvalues(gen)?;
    let (kdim, _) = kernel(&gen.dense()?)?;
    gap_from_spectrum(&eigs, kdim)
}

/// Condition number `‖S‖‖S⁻¹‖` of the eigenvector matrix with unit columns.
/// Within clusters of numerically equal eigenvalues the eigenvectors are
/// replaced by an orthonormal basis of their span; a cluster whose vectors
/// are (numerically) linearly dependent marks a Jordan block.
pub fn matrix_conditioning(m: &Matrix) -> Result<f64> {
    let n = m.nrows();
    let (lambda, mut v) = m.eig()?;
    for mut col in v.columns_mut() {
        let nrm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm > 0.0 {
            col.mapv_inplace(|z| z / nrm);
        }
    }
    let scale = lambda.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let mut cluster: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in 0..i {
            if (lambda[i] - lambda[j]).norm() <= CLUSTER_RTOL * scale {
                let (ri, rj) = (root(&mut cluster, i), root(&mut cluster, j));
                cluster[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        groups.entry(root(&mut cluster, i)).or_default().push(i);
    }
    for idx in groups.values().filter(|g| g.len() > 1) {
        let mut sub = Array2::<C64>::zeros((n, idx.len()));
        for (k, &i) in idx.iter().enumerate() {
            sub.column_mut(k).assign(&v.column(i));
        }
        let (u, sv, _) = sub.svd(true, false)?;
        let cond = sv[0] / sv[sv.len() - 1];
        if !(cond <= DEFECTIVE_CONDITION) {
            return Err(Error::DefectivePencil { condition: cond });
        }
        let u = u.expect("requested left singular vectors");
        for (k, &i) in idx.iter().enumerate() {
            v.column_mut(i).assign(&u.column(k));
        }
    }
    let (_, sv, _) = v.svd(false, false)?;
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let cond = sv[0] / smin;
    if !(cond <= DEFECTIVE_CONDITION) {
        return Err(Error::DefectivePencil { condition: cond });
    }
    Ok(cond.max(1.0))
}

fn root(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Conditioning of the dense generator's eigenvector matrix. Equal to
/// `‖S‖²` once `S` is rescaled so that `‖S‖ = ‖S⁻¹‖`.
pub fn conditioning_estimate(gen: &AssembledGenerator) -> Result<f64> {
    matrix_conditioning(&gen.dense()?)
}

/// Eigenvalues, gap, stationary state and conditioning of a dense generator.
pub fn spectral_report(gen: &AssembledGenerator) -> Result<SpectralReport> {
    let g = schroedinger(gen);
    let dense = g.dense()?;
    let mut eigs: Vec<C64> = dense.eigvals()?.iter().map(|&z| z * gen.time_scale()).collect();
    sort_descending_real(&mut eigs);
    let (kernel_dim, _) = kernel(&dense)?;
    let gap = gap_from_spectrum(&eigs, kernel_dim)?;
    let stationary_state = stationary_state(&g)?;
    let conditioning = matrix_conditioning(&dense)?;
    Ok(SpectralReport {
        eigenvalues: eigs,
        gap,
        stationary_state,
        conditioning,
        relaxation_time: 1.0 / gap,
        unique: kernel_dim == 1,
        kernel_dim,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub times: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub gap: f64,
    pub conditioning: f64,
    /// Decay rate fitted to the tail of `lhs`, when enough points lie
    /// above round-off.
    pub measured_rate: Option<f64>,
}

const RATE_FLOOR: f64 = 1e-11;

/// Compare `‖e^{ℒt} − |I⟩⟩⟨⟨π|‖₂` (Heisenberg matrix) against
/// `κ e^{−Δt+1}` on a time grid.
pub fn convergence_bound_check(gen: &AssembledGenerator, times: &[f64]) -> Result<ConvergenceReport> {
    if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation {
            field: "times".into(),
            line: None,
            reason: "time grid must be non-empty, non-negative and increasing".into(),
        });
    }
    let report = spectral_report(gen)?;
    let heis = gen.with_picture(Picture::Heisenberg);
    let dense = heis.dense()?;
    let d = heis.hilbert_dim();
    let id = vec_matrix(&Matrix::eye(d));
    let pi = vec_matrix(report.stationary_state.matrix()).mapv(|z| z.conj());
    let projector = Array2::from_shape_fn((d * d, d * d), |(i, j)| id[i] * pi[j]);

    let mut prop = Matrix::eye(d * d);
    let mut t_prev = 0.0;
    let mut step: Option<(f64, Matrix)> = None;
    let (mut lhs, mut rhs) = (Vec::new(), Vec::new());
    for &t in times {
        let dt = t - t_prev;
        if dt > 0.0 {
            let e = match &step {
                Some((h, e)) if (h - dt).abs() <= 1e-12 * dt.max(1.0) => e.clone(),
                _ => expm_dense(&dense, dt * gen.time_scale())?,
            };
            prop = e.dot(&prop);
            step = Some((dt, e));
        }
        t_prev = t;
        let l = matrix_norm(&(&prop - &projector));
        let r = report.conditioning * (1.0 - report.gap * t).exp();
        if l > r * (1.0 + BOUND_SLACK) {
            return Err(Error::BoundViolated { time: t, lhs: l, rhs: r });
        }
        lhs.push(l);
        rhs.push(r);
    }
    let measured_rate = tail_rate(times, &lhs);
    Ok(ConvergenceReport {
        times: times.to_vec(),
        lhs,
        rhs,
        gap: report.gap,
        conditioning: report.conditioning,
        measured_rate,
    })
}

/// `−slope` of a least-squares fit of `ln y` against `t` over the later half
/// of the points that lie above round-off.
fn tail_rate(t: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(_, &v)| v > RATE_FLOOR)
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    let tail = &pts[pts.len() / 2..];
    if tail.len() < 3 {
        return None;
    }
    let n = tail.len() as f64;
    let mt = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let my = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = tail.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = tail.iter().map(|p| (p.0 - mt).powi(2)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

#[derive(Debug, Clone, Copy)]
pub struct SparseGapOptions {
    /// Arnoldi steps (one propagator application each).
    pub steps: usize,
    /// Physical time of the propagator `e^{ℒτ}` being iterated.
    pub tau: f64,
    /// Relative Ritz residual accepted as converged.
    pub ritz_tol: f64,
    pub seed: u64,
}

impl Default for SparseGapOptions {
    fn default() -> Self {
        Self {
            steps: 40,
            tau: 1.0,
            ritz_tol: 1e-8,
            seed: 0,
        }
    }
}

/// Gap of a large generator from Arnoldi on the propagator `e^{ℒτ}`
/// restricted to traceless operators. The propagator maps the eigenvalue of
/// largest real part to the eigenvalue of largest modulus, so the slowest
/// mode is the first to converge regardless of its imaginary part. If no
/// Ritz value converges, `τ` is quadrupled (up to three times) to separate
/// slow modes further.
pub fn sparse_gap(gen: &AssembledGenerator, opts: &SparseGapOptions) -> Result<f64> {
    let mut o = *opts;
    let mut attempt = 0;
    loop {
        match propagator_arnoldi_gap(gen, &o) {
            Err(Error::ConvergenceFailure { .. }) if attempt < 3 => {
                attempt += 1;
                o.tau *= 4.0;
                log::info!("sparse gap: no converged Ritz value, retrying with tau = {}", o.tau);
            }
            r => return r,
        }
    }
}

fn propagator_arnoldi_gap(gen: &AssembledGenerator, opts: &SparseGapOptions) -> Result<f64> {
    use crate::propagate::{expmv, generator_norm_bound, KrylovOptions};
    use rand::Rng;
    let g = schroedinger(gen);
    let action = g.action();
    let d = g.hilbert_dim();
    let n = d * d;
    let t = opts.tau * gen.time_scale();
    let anorm = generator_norm_bound(&g);
    let kopts = KrylovOptions::default();
    let detrace = |x: &mut [C64]| {
        let tr: C64 = (0..d).map(|r| x[r + d * r]).sum::<C64>() / d as f64;
        (0..d).for_each(|r| x[r + d * r] -= tr);
    };
    let norm = |x: &[C64]| x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut rng = crate::rng::cell_rng(opts.seed, 0);
    let mut q0: Vec<C64> = (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    detrace(&mut q0);
    let n0 = norm(&q0);
    q0.iter_mut().for_each(|z| *z /= n0);
    let m = opts.steps.min(n.saturating_sub(2)).max(1);
    let mut basis = vec![q0];
    let mut h = Array2::<C64>::zeros((m + 1, m));
    let mut steps = m;
    for j in 0..m {
        let (mut w, _) = expmv(action, t, &basis[j], anorm, &kopts)?;
        detrace(&mut w);
        for _ in 0..2 {
            for (i, q) in basis.iter().enumerate() {
                let c: C64 = q.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
                h[[i, j]] += c;
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let beta = norm(&w);
        h[[j + 1, j]] = C64::new(beta, 0.0);
        if beta < 1e-14 {
            steps = j + 1;
            break;
        }
        w.iter_mut().for_each(|z| *z /= beta);
        basis.push(w);
    }
    let hm = h.slice(s![..steps, ..steps]).to_owned();
    let tail = h[[steps, steps - 1]].norm();
    let (mu, y) = hm.eig()?;
    let largest = mu.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut best: Option<f64> = None;
    for (k, &z) in mu.iter().enumerate() {
        if z.norm() <= 1e-300 {
            continue;
        }
        let ritz_residual = tail * y[[steps - 1, k]].norm();
        if ritz_residual > opts.ritz_tol * largest {
            continue;
        }
        let rate = -z.norm().ln() / opts.tau;
        best = Some(best.map_or(rate, |b: f64| b.min(rate)));
    }
    match best {
        Some(gap) if gap >= GAP_TOL => Ok(gap),
        Some(gap) => Err(Error::GapBelowTolerance { gap }),
        None => Err(Error::ConvergenceFailure {
            what: "propagator Arnoldi",
            residual: tail,
            tolerance: opts.ritz_tol,
        }),
    }
}
