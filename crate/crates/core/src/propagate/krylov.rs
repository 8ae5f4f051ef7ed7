//! Action of `exp(t A)` on a vector by Arnoldi projection with adaptive
//! sub-stepping (after Sidje's Expokit `zgexpv`).

use ndarray::{s, Array2};

use super::expm::expm_dense;
use crate::error::{Error, Result};
use crate::sparse::LinearMap;
use crate::{C64, ZERO};

#[derive(Debug, Clone, Copy)]
pub struct KrylovOptions {
    /// Krylov basis size.
    pub m: usize,
    /// Error tolerance per unit time, relative to `‖v‖`.
    pub tol: f64,
    pub max_steps: usize,
    pub max_rejections: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            m: 30,
            tol: 1e-12,
            max_steps: 100_000,
            max_rejections: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct KrylovStats {
    pub steps: usize,
    pub rejections: usize,
    pub matvecs: usize,
    /// Accumulated local error estimate (absolute).
    pub error_estimate: f64,
}

/// Reorthogonalize when one pass keeps less than this fraction of the norm.
const REORTH_RATIO: f64 = 0.7;
/// Smallest basis tried before the full `m`, and the checking interval.
const EARLY_MIN: usize = 10;
const EARLY_EVERY: usize = 5;

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn round_step(t: f64) -> f64 {
    let s = 10f64.powf(t.log10().floor() - 1.0);
    (t / s).ceil() * s
}

/// `exp(t A) v`. `anorm` is any upper bound on `‖A‖₂`; it only sets the
/// first trial step.
pub fn expmv<A: LinearMap + ?Sized>(
    a: &A,
    t: f64,
    v: &[C64],
    anorm: f64,
    opts: &KrylovOptions,
) -> Result<(Vec<C64>, KrylovStats)> {
    let n = a.dim();
    assert_eq!(v.len(), n);
    let mut stats = KrylovStats::default();
    let mut w = v.to_vec();
    let normv = norm(v);
    if t == 0.0 || normv == 0.0 {
        return Ok((w, stats));
    }
    if t < 0.0 {
        return Err(Error::Validation {
            field: "t".into(),
            line: None,
            reason: format!("negative time {t}"),
        });
    }
    let anorm = anorm.max(1e-300);
    let tol = opts.tol * normv;
    let m = opts.m.min(n).max(1);
    let btol = 1e-7 * normv.clamp(1e-300, 1.0);
    let (gamma, delta) = (0.9, 1.2);
    let rndoff = anorm * f64::EPSILON * normv;
    let mf = m as f64;
    let fact = ((mf + 1.0) / std::f64::consts::E).powf(mf + 1.0) * (2.0 * std::f64::consts::PI * (mf + 1.0)).sqrt();
    let mut beta = normv;
    let mut t_new = (1.0 / anorm) * ((fact * tol) / (4.0 * beta * anorm)).powf(1.0 / mf);
    t_new = round_step(t_new).min(t);
    let mut t_now = 0.0;
    let mut basis: Vec<Vec<C64>> = (0..=m).map(|_| vec![ZERO; n]).collect();
    let mut p = vec![ZERO; n];

    while t_now < t {
        stats.steps += 1;
        if stats.steps > opts.max_steps {
            return Err(Error::ConvergenceFailure {
                what: "Krylov exponential",
                residual: stats.error_estimate,
                tolerance: tol,
            });
        }
        let mut t_step = (t - t_now).min(t_new);
        let mut h = Array2::<C64>::zeros((m + 2, m + 2));
        for (b, x) in basis[0].iter_mut().zip(&w) {
            *b = x / beta;
        }
        let mut mb = m;
        let mut k1 = 2usize;
        // basis size, coefficients and error when a short basis suffices
        let mut early: Option<(usize, Array2<C64>, f64)> = None;
        for j in 0..m {
            a.apply(&basis[j], &mut p);
            stats.matvecs += 1;
            // modified Gram-Schmidt; repeat once if cancellation was severe
            let before = norm(&p);
            for pass in 0..2 {
                for i in 0..=j {
                    let c = dot(&basis[i], &p);
                    h[[i, j]] += c;
                    for (pk, bk) in p.iter_mut().zip(&basis[i]) {
                        *pk -= c * bk;
                    }
                }
                if pass == 0 && norm(&p) > REORTH_RATIO * before {
                    break;
                }
            }
            let s = norm(&p);
            if s < btol {
                // happy breakdown: the Krylov space is invariant
                k1 = 0;
                mb = j + 1;
                t_step = t - t_now;
                break;
            }
            h[[j + 1, j]] = C64::new(s, 0.0);
            for (b, x) in basis[j + 1].iter_mut().zip(&p) {
                *b = x / s;
            }
            let k = j + 1;
            if k < m && k >= EARLY_MIN && k % EARLY_EVERY == 0 {
                let mut hk = Array2::<C64>::zeros((k + 1, k + 1));
                hk.slice_mut(s![..k, ..k]).assign(&h.slice(s![..k, ..k]));
                hk[[k, k - 1]] = h[[k, k - 1]];
                let f = expm_dense(&hk, t_step)?;
                let err = (beta * f[[k, 0]]).norm();
                if err <= delta * t_step * tol {
                    early = Some((k, f, err));
                    break;
                }
            }
        }
        if let Some((k, f, err)) = early {
            w.iter_mut().for_each(|x| *x = ZERO);
            for (i, b) in basis.iter().enumerate().take(k) {
                let c = beta * f[[i, 0]];
                for (wk, bk) in w.iter_mut().zip(b) {
                    *wk += c * bk;
                }
            }
            beta = norm(&w);
            t_now += t_step;
            let xm = 1.0 / (k as f64 - 1.0);
            t_new = round_step(gamma * t_step * (t_step * tol / err.max(1e-300)).powf(xm));
            stats.error_estimate += err.max(rndoff);
            if beta == 0.0 {
                break;
            }
            continue;
        }
        let mut avnorm = 0.0;
        if k1 != 0 {
            h[[m + 1, m]] = C64::new(1.0, 0.0);
            a.apply(&basis[m], &mut p);
            stats.matvecs += 1;
            avnorm = norm(&p);
        }

        let mut rejections = 0;
        let (f, err_loc, xm) = loop {
            let mx = mb + k1;
            let hs = h.slice(s![..mx, ..mx]).to_owned();
            let f = expm_dense(&hs, t_step)?;
            if k1 == 0 {
                break (f, btol.min(tol * t_step), 1.0 / mf);
            }
            let phi1 = (beta * f[[m, 0]]).norm();
            let phi2 = (beta * f[[m + 1, 0]] * avnorm).norm();
            let (err, xm) = if phi1 > 10.0 * phi2 {
                (phi2, 1.0 / mf)
            } else if phi1 > phi2 {
                (phi1 * phi2 / (phi1 - phi2), 1.0 / mf)
            } else {
                (phi1, 1.0 / (mf - 1.0).max(1.0))
            };
            if err <= delta * t_step * tol {
                break (f, err, xm);
            }
            rejections += 1;
            stats.rejections += 1;
            if rejections > opts.max_rejections {
                return Err(Error::ConvergenceFailure {
                    what: "Krylov exponential",
                    residual: err,
                    tolerance: delta * t_step * tol,
                });
            }
            t_step = round_step(gamma * t_step * (t_step * tol / err).powf(xm));
        };

        let mx = mb + k1.saturating_sub(1);
        w.iter_mut().for_each(|x| *x = ZERO);
        for (i, b) in basis.iter().enumerate().take(mx.min(m + 1)) {
            let c = beta * f[[i, 0]];
            for (wk, bk) in w.iter_mut().zip(b) {
                *wk += c * bk;
            }
        }
        beta = norm(&w);
        t_now += t_step;
        if k1 == 0 {
            t_now = t;
        }
        t_new = round_step(gamma * t_step * (t_step * tol / err_loc.max(1e-300)).powf(xm));
        stats.error_estimate += err_loc.max(rndoff);
        if beta == 0.0 {
            break;
        }
    }
    Ok((w, stats))
}
