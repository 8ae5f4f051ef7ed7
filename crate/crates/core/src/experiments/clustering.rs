//! Stationary-state correlations, factorization under the decoupled
//! generator `ℒ(0)`, and the correlation-length sweep.

use ndarray::{Array1, Array2};
use serde::Serialize;

use super::least_squares;
use super::lightcone::{place, LrFit};
use crate::error::{Error, Result};
use crate::lattice::{Lattice, Region};
use crate::lindblad::{AssembledGenerator, Picture};
use crate::models::Model;
use crate::operator::{kron, random_density, LocalOperator, Matrix};
use crate::propagate::evolve_observable_many;
use crate::rng::cell_rng;
use crate::C64;

/// A density matrix `⊗_x ρ_x` over every lattice site.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductState {
    factors: Vec<Matrix>,
}

impl ProductState {
    pub fn new(factors: Vec<Matrix>) -> Self {
        Self { factors }
    }

    pub fn maximally_mixed(lattice: &Lattice) -> Self {
        let factors = lattice
            .site_dims()
            .iter()
            .map(|&d| Matrix::eye(d).mapv(|z| z / d as f64))
            .collect();
        Self { factors }
    }

    /// Independent random single-site states; site `x` uses stream `x`.
    pub fn random(lattice: &Lattice, seed: u64) -> Self {
        let factors = lattice
            .site_dims()
            .iter()
            .enumerate()
            .map(|(x, &d)| random_density(&mut cell_rng(seed, x as u64), d))
            .collect();
        Self { factors }
    }

    /// Single-site marginals of `state` (sites outside its support are
    /// maximally mixed).
    pub fn marginals_of(lattice: &Lattice, state: &LocalOperator) -> Result<Self> {
        let mut out = Self::maximally_mixed(lattice);
        for &x in state.support().sites() {
            out.factors[x] = state.partial_trace(&Region::single(x))?.into_matrix();
        }
        Ok(out)
    }

    pub fn factor(&self, x: usize) -> &Matrix {
        &self.factors[x]
    }

    /// `Tr(ρ O)`.
    pub fn expectation(&self, op: &LocalOperator) -> C64 {
        let rho = op.support().sites().iter().fold(Matrix::eye(1), |acc, &x| kron(&acc, &self.factors[x]));
        (&rho * &op.matrix().t()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub joint: f64,
    pub product: f64,
    pub connected: f64,
}

fn expectation(rho: &LocalOperator, op: &LocalOperator) -> Result<C64> {
    let reduced = rho.partial_trace(op.support())?;
    Ok((reduced.matrix() * &op.matrix().t()).sum())
}

/// `Tr(π O_A O_B)`, `Tr(π O_A) Tr(π O_B)` and their difference, using only
/// the reduced state on the supports. Imaginary parts are dropped; they
/// vanish for Hermitian observables.
pub fn stationary_correlation(pi: &LocalOperator, o_a: &LocalOperator, o_b: &LocalOperator) -> Result<Correlation> {
    let joint = expectation(pi, &o_a.mul(o_b)?)?;
    let product = expectation(pi, o_a)? * expectation(pi, o_b)?;
    let connected = joint - product;
    if connected.im.abs() > 1e-8 {
        log::warn!("connected correlation has imaginary part {:.3e}", connected.im);
    }
    Ok(Correlation {
        joint: joint.re,
        product: product.re,
        connected: connected.re,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecouplingReport {
    pub times: Vec<f64>,
    /// `|⟨⟨ρ|e^{ℒ(0)t}|O_A O_B⟩⟩ − ⟨⟨ρ|e^{ℒ(0)t}|O_A⟩⟩⟨⟨ρ|e^{ℒ(0)t}|O_B⟩⟩|`
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

pub const FACTORIZATION_TOL: f64 = 1e-8;

/// Evolve `O_A`, `O_B` and `O_A O_B` under `ℒ(0)` (all terms inside `R`
/// removed) and check that expectations in the product state factorize.
#[allow(clippy::too_many_arguments)]
pub fn decoupling_check(
    gen: &AssembledGenerator,
    a: &Region,
    b: &Region,
    r: &Region,
    rho: &ProductState,
    o_a: &LocalOperator,
    o_b: &LocalOperator,
    times: &[f64],
) -> Result<DecouplingReport> {
    if !o_a.support().is_subset(a) || !o_b.support().is_subset(b) {
        return Err(Error::BadSupport {
            support: o_a.support().union(o_b.support()).sites().to_vec(),
            target: a.union(b).sites().to_vec(),
        });
    }
    let heis = if gen.picture() == Picture::Heisenberg {
        gen.interpolate(r, 0.0)?
    } else {
        gen.with_picture(Picture::Heisenberg).interpolate(r, 0.0)?
    };
    let ea = evolve_observable_many(&heis, o_a, times)?;
    let eb = evolve_observable_many(&heis, o_b, times)?;
    let eab = evolve_observable_many(&heis, &o_a.mul(o_b)?, times)?;
    let residuals: Vec<f64> = (0..times.len())
        .map(|k| (rho.expectation(&eab[k]) - rho.expectation(&ea[k]) * rho.expectation(&eb[k])).norm())
        .collect();
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    if max_residual > FACTORIZATION_TOL {
        let worst = residuals.iter().position(|&v| v == max_residual).unwrap_or(0);
        return Err(Error::FactorizationViolated {
            time: times[worst],
            residual: max_residual,
        });
    }
    Ok(DecouplingReport {
        times: times.to_vec(),
        residuals,
        max_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusteringRow {
    pub d_ab: f64,
    pub joint: f64,
    pub product: f64,
    pub connected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusteringFit {
    /// `None` when all connected correlations are below the floor.
    pub correlation_length: Option<f64>,
    pub r_squared: Option<f64>,
    pub uncorrelated: bool,
    pub v: f64,
    pub xi: f64,
    pub gap: f64,
    /// `v/Δ + ξ`.
    pub mu: f64,
    /// Largest membrane term count × max physical term bound over the
    /// placements where membranes fit; constant in `d_AB` in one dimension.
    pub l_r_norm_bound: Option<f64>,
    pub conditioning: Option<f64>,
    pub monotone_envelope: bool,
    /// `correlation_length ≤ 2μ (1 + 0.25)`; vacuous when uncorrelated.
    pub within_bound: bool,
}

pub const UNCORRELATED_FLOOR: f64 = 1e-10;
const FIT_FLOOR: f64 = 1e-13;
pub const CLUSTERING_TOLERANCE: f64 = 0.25;

/// Inputs to the sweep measured elsewhere: light-cone velocity and length,
/// the gap, and optionally the conditioning of the same model.
#[derive(Debug, Clone, Copy)]
pub struct ClusteringInputs {
    pub lr: LrFit,
    pub gap: f64,
    pub conditioning: Option<f64>,
}

/// Connected correlations of `O_A` with `O_B` placed on each region of
/// `placements`, and the fitted decay length compared against `2μ`.
pub fn clustering_sweep(
    model: &Model,
    pi: &LocalOperator,
    o_a: &LocalOperator,
    o_b: &LocalOperator,
    placements: &[Region],
    inputs: &ClusteringInputs,
) -> Result<(Vec<ClusteringRow>, ClusteringFit)> {
    let lattice = &model.lattice;
    let mut rows = Vec::with_capacity(placements.len());
    for b in placements {
        let ob = place(o_b, b)?;
        let c = stationary_correlation(pi, o_a, &ob)?;
        rows.push(ClusteringRow {
            d_ab: lattice.region_distance(o_a.support(), b)?,
            joint: c.joint,
            product: c.product,
            connected: c.connected,
        });
    }
    rows.sort_by(|x, y| x.d_ab.total_cmp(&y.d_ab));

    let max_b = model.terms.iter().map(|t| t.norm_bound()).fold(0.0, f64::max);
    let l_r_norm_bound = placements
        .iter()
        .filter_map(|b| lattice.build_membranes(o_a.support(), b, model.d_star).ok())
        .map(|r| model.terms.iter().filter(|t| t.support().is_subset(&r)).count() as f64 * max_b)
        .reduce(f64::max);

    let mu = inputs.lr.v / inputs.gap + inputs.lr.xi;
    let uncorrelated = rows.iter().all(|r| r.connected.abs() <= UNCORRELATED_FLOOR);
    let monotone_envelope = rows
        .windows(2)
        .all(|w| w[1].connected.abs() <= w[0].connected.abs() * (1.0 + 1e-6) + 1e-14);
    let (correlation_length, r_squared) = if uncorrelated {
        (None, None)
    } else {
        let (len, r2) = decay_length(&rows)?;
        (Some(len), Some(r2))
    };
    let within_bound = correlation_length.is_none_or(|l| l <= 2.0 * mu * (1.0 + CLUSTERING_TOLERANCE));
    Ok((
        rows,
        ClusteringFit {
            correlation_length,
            r_squared,
            uncorrelated,
            v: inputs.lr.v,
            xi: inputs.lr.xi,
            gap: inputs.gap,
            mu,
            l_r_norm_bound,
            conditioning: inputs.conditioning,
            monotone_envelope,
            within_bound,
        },
    ))
}

/// `−1/slope` of `ln|connected|` against `d_AB`.
fn decay_length(rows: &[ClusteringRow]) -> Result<(f64, f64)> {
    let pts: Vec<&ClusteringRow> = rows.iter().filter(|r| r.connected.abs() > FIT_FLOOR).collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData {
            rows: pts.len(),
            required: 3,
        });
    }
    let x = Array2::from_shape_fn((pts.len(), 2), |(i, k)| if k == 0 { 1.0 } else { pts[i].d_ab });
    let y: Array1<f64> = pts.iter().map(|r| r.connected.abs().ln()).collect();
    let (beta, r2) = least_squares(&x, &y)?;
    if !(beta[1] < 0.0) {
        return Err(Error::DegenerateFit(format!("correlations do not decay (slope {})", beta[1])));
    }
    Ok((-1.0 / beta[1], r2))
}
