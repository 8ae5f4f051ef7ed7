//! `exp(ℒ t)`: dense exponentials for small generators, Krylov actions for
//! large ones, and observable trajectories.
//!
//! Times are physical; the normalized generator is exponentiated at
//! `t · time_scale`.

pub mod expm;
pub mod krylov;

use ndarray::Array1;
use ndarray_linalg::{EigValsh, UPLO};
use rand::Rng;

pub use expm::{expm_dense, expm_taylor, EXPM_MAX_DIM};
pub use krylov::{expmv, KrylovOptions, KrylovStats};

use crate::error::{Error, Result};
use crate::lindblad::{AssembledGenerator, Picture, DENSE_MAX};
use crate::operator::{
    dagger, matrix_norm, max_abs_diff, random_density, random_matrix, unvec, unvec_matrix, vec, vec_matrix, LocalOperator, Matrix,
    SuperKet,
};
use crate::rng::cell_rng;
use crate::C64;

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SuperKet>,
    pub picture: Picture,
}

/// Upper bound on the 2-norm of the normalized superoperator.
pub fn generator_norm_bound(gen: &AssembledGenerator) -> f64 {
    gen.active_terms().map(|(t, w)| w * t.norm_bound()).sum::<f64>().max(1e-12)
}

/// `exp(ℒ t) |sk⟩⟩` for a superket on the generator's sites.
pub fn krylov_apply(gen: &AssembledGenerator, sk: &SuperKet, t: f64) -> Result<SuperKet> {
    krylov_apply_with(gen, sk, t, &KrylovOptions::default())
}

pub fn krylov_apply_with(gen: &AssembledGenerator, sk: &SuperKet, t: f64, opts: &KrylovOptions) -> Result<SuperKet> {
    gen.check_superket(sk)?;
    if t == 0.0 {
        return Ok(sk.clone());
    }
    let v = sk.vector().as_slice().expect("contiguous superket");
    let (w, _) = expmv(gen.action(), t * gen.time_scale(), v, generator_norm_bound(gen), opts)?;
    SuperKet::new(sk.support().clone(), sk.dims().to_vec(), Array1::from(w))
}

/// Dense `exp(ℒ t)` (superoperator dimension ≤ 4096).
pub fn dense_propagator(gen: &AssembledGenerator, t: f64) -> Result<Matrix> {
    expm_dense(&gen.dense()?, t * gen.time_scale())
}

fn check_grid(times: &[f64]) -> Result<()> {
    let bad = |reason: String| Error::Validation {
        field: "times".into(),
        line: None,
        reason,
    };
    if times.is_empty() {
        return Err(bad("empty time grid".into()));
    }
    if times[0] < 0.0 {
        return Err(bad(format!("negative time {}", times[0])));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad("times must be strictly increasing".into()));
    }
    Ok(())
}

/// States at every grid time, stepping from one grid point to the next.
/// `states[k] = exp(ℒ times[k]) sk`, so `states[0] = sk` when `times[0] = 0`.
pub fn trajectory(gen: &AssembledGenerator, sk: &SuperKet, times: &[f64]) -> Result<Trajectory> {
    check_grid(times)?;
    let mut states = Vec::with_capacity(times.len());
    let mut current = sk.clone();
    let mut t_prev = 0.0;
    for &t in times {
        current = krylov_apply(gen, &current, t - t_prev)?;
        states.push(current.clone());
        t_prev = t;
    }
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        picture: gen.picture(),
    })
}

/// Heisenberg evolution of a local observable. Only the sites reachable from
/// the support through active terms are simulated; the rest of the lattice
/// cannot affect the result. The returned operator lives on that closure.
pub fn evolve_observable(gen: &AssembledGenerator, op: &LocalOperator, t: f64) -> Result<LocalOperator> {
    evolve_observable_many(gen, op, &[t]).map(|mut v| v.pop().unwrap())
}

/// As [`evolve_observable`] for an increasing list of times.
pub fn evolve_observable_many(gen: &AssembledGenerator, op: &LocalOperator, times: &[f64]) -> Result<Vec<LocalOperator>> {
    if gen.picture() != Picture::Heisenberg {
        return Err(Error::Validation {
            field: "picture".into(),
            line: None,
            reason: "observable evolution needs the Heisenberg picture".into(),
        });
    }
    let closure = gen.closure(op.support());
    let sub = gen.restrict(&closure)?;
    let start = vec(&op.embed(&closure, sub.dims())?);
    let traj = trajectory(&sub, &start, times)?;
    traj.states.iter().map(unvec).collect()
}

#[derive(Debug, Clone)]
pub struct ContractionReport {
    pub max_ratio: f64,
    pub worst_time: f64,
    pub worst_sample: usize,
    /// `ratios[k][s]` for grid time `k` and sample `s`.
    pub ratios: Vec<Vec<f64>>,
}

const CONTRACTION_SLACK: f64 = 1e-8;

/// Check `‖O(t)‖ ≤ ‖O‖ (1 + 1e-8)` for random operators on the generator's
/// sites. Applies to any unital sub-generator.
pub fn contraction_check(gen: &AssembledGenerator, samples: usize, times: &[f64], seed: u64) -> Result<ContractionReport> {
    check_grid(times)?;
    if gen.picture() != Picture::Heisenberg {
        return Err(Error::Validation {
            field: "picture".into(),
            line: None,
            reason: "contraction applies to the Heisenberg picture".into(),
        });
    }
    let d = gen.hilbert_dim();
    let ops: Vec<Matrix> = (0..samples)
        .map(|s| {
            let mut rng = cell_rng(seed, s as u64);
            let g = random_matrix(&mut rng, d);
            if rng.random::<bool>() {
                // Hermitian samples too
                (&g + &dagger(&g)).mapv(|v| v * 0.5)
            } else {
                g
            }
        })
        .collect();
    let norms0: Vec<f64> = ops.iter().map(matrix_norm).collect();
    let mut evolved: Vec<Vec<Matrix>> = vec![Vec::with_capacity(times.len()); samples];
    if gen.dim() <= DENSE_MAX {
        let dense = gen.dense()?;
        let mut prop = Matrix::eye(gen.dim());
        let mut t_prev = 0.0;
        let mut last_step: Option<(f64, Matrix)> = None;
        for &t in times {
            let dt = t - t_prev;
            let step = match &last_step {
                Some((h, e)) if (h - dt).abs() <= 1e-12 * dt.max(1.0) => e.clone(),
                _ => expm_dense(&dense, dt * gen.time_scale())?,
            };
            prop = step.dot(&prop);
            last_step = Some((dt, step));
            t_prev = t;
            for (o, out) in ops.iter().zip(evolved.iter_mut()) {
                let v = prop.dot(&crate::operator::vec_matrix(o));
                out.push(crate::operator::unvec_matrix(&v)?);
            }
        }
    } else {
        for (o, out) in ops.iter().zip(evolved.iter_mut()) {
            let sk = SuperKet::new(gen.sites().clone(), gen.dims().to_vec(), crate::operator::vec_matrix(o))?;
            for s in trajectory(gen, &sk, times)?.states {
                out.push(crate::operator::unvec_matrix(s.vector())?);
            }
        }
    }
    let mut report = ContractionReport {
        max_ratio: 0.0,
        worst_time: times[0],
        worst_sample: 0,
        ratios: vec![vec![0.0; samples]; times.len()],
    };
    for (s, per_time) in evolved.iter().enumerate() {
        for (k, m) in per_time.iter().enumerate() {
            let ratio = if times[k] == 0.0 { 1.0 } else { matrix_norm(m) / norms0[s] };
            report.ratios[k][s] = ratio;
            if ratio > report.max_ratio {
                report.max_ratio = ratio;
                report.worst_time = times[k];
                report.worst_sample = s;
            }
        }
    }
    if report.max_ratio > 1.0 + CONTRACTION_SLACK {
        let witness = LocalOperator::new(gen.sites().clone(), gen.dims().to_vec(), ops[report.worst_sample].clone())?;
        return Err(Error::ContractionViolated {
            ratio: report.max_ratio,
            time: report.worst_time,
            witness: Box::new(witness),
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct StateReport {
    pub samples: usize,
    pub times: Vec<f64>,
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

impl StateReport {
    /// Trace and Hermiticity to `tol`, eigenvalues above `-positivity_tol`.
    pub fn passes(&self, tol: f64, positivity_tol: f64) -> bool {
        self.max_trace_error <= tol && self.max_hermiticity_error <= tol && self.min_eigenvalue >= -positivity_tol
    }
}

/// Evolve random density matrices in the Schrödinger picture and record the
/// worst trace, Hermiticity and positivity errors over the grid.
pub fn state_check(gen: &AssembledGenerator, samples: usize, times: &[f64], seed: u64) -> Result<StateReport> {
    check_grid(times)?;
    if gen.picture() != Picture::Schroedinger {
        return Err(Error::Validation {
            field: "picture".into(),
            line: None,
            reason: "state evolution needs the Schrödinger picture".into(),
        });
    }
    let d = gen.hilbert_dim();
    let dense = if gen.dim() <= DENSE_MAX { Some(gen.dense()?) } else { None };
    let mut report = StateReport {
        samples,
        times: times.to_vec(),
        max_trace_error: 0.0,
        max_hermiticity_error: 0.0,
        min_eigenvalue: f64::INFINITY,
    };
    let steps: Vec<Matrix> = match &dense {
        Some(l) => {
            let mut t_prev = 0.0;
            times
                .iter()
                .map(|&t| {
                    let e = expm_dense(l, (t - t_prev) * gen.time_scale());
                    t_prev = t;
                    e
                })
                .collect::<Result<_>>()?
        }
        None => Vec::new(),
    };
    for s in 0..samples {
        let rho = random_density(&mut cell_rng(seed, s as u64), d);
        let sk = SuperKet::new(gen.sites().clone(), gen.dims().to_vec(), vec_matrix(&rho))?;
        let states: Vec<Array1<C64>> = if dense.is_some() {
            let mut v = sk.into_vector();
            steps
                .iter()
                .map(|e| {
                    v = e.dot(&v);
                    v.clone()
                })
                .collect()
        } else {
            trajectory(gen, &sk, times)?.states.into_iter().map(SuperKet::into_vector).collect()
        };
        for v in states {
            let m = unvec_matrix(&v)?;
            report.max_trace_error = report.max_trace_error.max((m.diag().sum() - 1.0).norm());
            report.max_hermiticity_error = report.max_hermiticity_error.max(max_abs_diff(&m, &dagger(&m)));
            let herm = (&m + &dagger(&m)).mapv(|z| z * 0.5);
            let w = herm.eigvalsh(UPLO::Lower)?;
            report.min_eigenvalue = report.min_eigenvalue.min(w.iter().copied().fold(f64::INFINITY, f64::min));
        }
    }
    Ok(report)
}

/// `exp(ℒ t)` applied densely to a superket (small generators).
pub fn dense_apply(gen: &AssembledGenerator, sk: &SuperKet, t: f64) -> Result<SuperKet> {
    gen.check_superket(sk)?;
    let e = dense_propagator(gen, t)?;
    let v: Array1<C64> = e.dot(sk.vector());
    SuperKet::new(sk.support().clone(), sk.dims().to_vec(), v)
}
