//! Preconditioned BiCGSTAB and the bordered stationary-state system.

use crate::error::{Error, Result};
use crate::sparse::LinearMap;
use crate::{C64, ZERO};

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Target `‖b - A x‖ / ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Solve `A x = b` with right preconditioning by the inverse diagonal
/// `inv_diag` (if given), starting from `x0` or zero.
pub fn bicgstab<A: LinearMap + ?Sized>(
    a: &A,
    b: &[C64],
    x0: Option<&[C64]>,
    inv_diag: Option<&[C64]>,
    opts: &SolveOptions,
) -> Result<(Vec<C64>, SolveStats)> {
    let n = a.dim();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((vec![ZERO; n], SolveStats::default()));
    }
    let precond = |src: &[C64], dst: &mut [C64]| match inv_diag {
        Some(m) => dst.iter_mut().zip(src).zip(m).for_each(|((d, s), w)| *d = s * w),
        None => dst.copy_from_slice(src),
    };
    let mut x = x0.map(<[C64]>::to_vec).unwrap_or_else(|| vec![ZERO; n]);
    let mut r = vec![ZERO; n];
    a.apply(&x, &mut r);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let r_hat = r.clone();
    let mut p = vec![ZERO; n];
    let mut v = vec![ZERO; n];
    let mut y = vec![ZERO; n];
    let mut t = vec![ZERO; n];
    let (mut rho, mut alpha, mut omega) = (C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0));
    let mut stats = SolveStats {
        iterations: 0,
        relative_residual: norm(&r) / bnorm,
    };
    while stats.relative_residual > opts.tol {
        if stats.iterations >= opts.max_iter {
            return Err(Error::NoConvergence {
                iterations: stats.iterations,
                residual: stats.relative_residual,
            });
        }
        stats.iterations += 1;
        let rho_new = dot(&r_hat, &r);
        if rho_new.norm() == 0.0 || omega.norm() == 0.0 {
            return Err(Error::NoConvergence {
                iterations: stats.iterations,
                residual: stats.relative_residual,
            });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for ((pi, ri), vi) in p.iter_mut().zip(&r).zip(&v) {
            *pi = ri + beta * (*pi - omega * vi);
        }
        precond(&p, &mut y);
        a.apply(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        x.iter_mut().zip(&y).for_each(|(xi, yi)| *xi += alpha * yi);
        r.iter_mut().zip(&v).for_each(|(ri, vi)| *ri -= alpha * vi);
        stats.relative_residual = norm(&r) / bnorm;
        if stats.relative_residual <= opts.tol {
            break;
        }
        precond(&r, &mut y);
        a.apply(&y, &mut t);
        let tt = dot(&t, &t).re;
        omega = if tt > 0.0 { dot(&t, &r) / tt } else { ZERO };
        x.iter_mut().zip(&y).for_each(|(xi, yi)| *xi += omega * yi);
        r.iter_mut().zip(&t).for_each(|(ri, ti)| *ri -= omega * ti);
        stats.relative_residual = norm(&r) / bnorm;
        log::debug!("bicgstab iteration {}: residual {:.3e}", stats.iterations, stats.relative_residual);
    }
    Ok((x, stats))
}

/// `x ↦ ℒx - c Tr(x) ρ_ref` on column-stacked `D × D` operators, with
/// `ρ_ref = |0⟩⟨0|`. For a generator with a unique fixed point the system
/// `A x = -c ρ_ref` has the unit-trace stationary state as its solution.
pub struct Bordered<'a, A: LinearMap + ?Sized> {
    pub inner: &'a A,
    pub d: usize,
    pub c: f64,
}

impl<A: LinearMap + ?Sized> Bordered<'_, A> {
    pub fn trace(&self, x: &[C64]) -> C64 {
        (0..self.d).map(|r| x[r + self.d * r]).sum()
    }

    pub fn rhs(&self) -> Vec<C64> {
        let mut b = vec![ZERO; self.d * self.d];
        b[0] = C64::new(-self.c, 0.0);
        b
    }

    /// Inverse diagonal of the bordered operator given the diagonal of ℒ.
    pub fn inverse_diagonal(&self, diag: &[C64]) -> Vec<C64> {
        let mut out: Vec<C64> = diag.to_vec();
        out[0] -= self.c;
        out.iter()
            .map(|&v| if v.norm() > 1e-14 { 1.0 / v } else { C64::new(1.0, 0.0) })
            .collect()
    }
}

impl<A: LinearMap + ?Sized> LinearMap for Bordered<'_, A> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.inner.apply(x, y);
        let tr = self.trace(x);
        y[0] -= self.c * tr;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::random_matrix;
    use crate::rng::cell_rng;
    use crate::sparse::DenseMap;

    #[test]
    fn solves_diagonally_dominant_system() {
        let mut rng = cell_rng(60, 0);
        let n = 50;
        let mut a = random_matrix(&mut rng, n).mapv(|v| v * 0.1);
        for i in 0..n {
            a[[i, i]] += C64::new(3.0 + i as f64 * 0.1, 1.0);
        }
        let b: Vec<C64> = random_matrix(&mut rng, n).column(0).to_vec();
        let diag: Vec<C64> = (0..n).map(|i| 1.0 / a[[i, i]]).collect();
        for m in [None, Some(diag.as_slice())] {
            let (x, stats) = bicgstab(&DenseMap(&a), &b, None, m, &SolveOptions::default()).unwrap();
            let ax = a.dot(&ndarray::Array1::from(x));
            let err = ax.iter().zip(&b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
            assert!(err < 1e-10, "{err}");
            assert!(stats.iterations > 0);
        }
    }

    #[test]
    fn reports_stall() {
        let mut rng = cell_rng(61, 0);
        let a = random_matrix(&mut rng, 40);
        let b: Vec<C64> = random_matrix(&mut rng, 40).column(0).to_vec();
        let opts = SolveOptions { tol: 1e-14, max_iter: 2 };
        assert!(matches!(
            bicgstab(&DenseMap(&a), &b, None, None, &opts),
            Err(Error::NoConvergence { .. })
        ));
    }
}
