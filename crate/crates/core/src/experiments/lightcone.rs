//! Commutator profiles `‖[O_B(t), O_A]‖` and their light-cone fit
//! `c V ‖O_A‖‖O_B‖ exp(−(d − v t)/ξ)`.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::Serialize;

use super::least_squares;
use crate::error::{Error, Result};
use crate::lattice::Region;
use crate::lindblad::AssembledGenerator;
use crate::operator::{commutator, op_norm, LocalOperator};
use crate::propagate::evolve_observable_many;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LightconeRow {
    pub d_ab: f64,
    pub t: f64,
    pub norm: f64,
    pub norm_oa: f64,
    pub norm_ob: f64,
    pub volume: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LightconeTable {
    pub rows: Vec<LightconeRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LrFit {
    pub c: f64,
    pub v: f64,
    pub xi: f64,
    pub r_squared: f64,
    /// `(floor, cap)` on the commutator norm.
    pub window: (f64, f64),
    pub rows_used: usize,
}

pub const FIT_FLOOR: f64 = 1e-12;
pub const FIT_CAP_FRACTION: f64 = 0.1;
pub const FIT_MIN_ROWS: usize = 10;

/// Copy of `template` with its support translated onto `placement`.
pub fn place(template: &LocalOperator, placement: &Region) -> Result<LocalOperator> {
    if placement.len() != template.support().len() {
        return Err(Error::BadSupport {
            support: placement.sites().to_vec(),
            target: template.support().sites().to_vec(),
        });
    }
    LocalOperator::new(placement.clone(), template.dims().to_vec(), template.matrix().clone())
}

/// Rows ordered by placement, then time.
pub fn commutator_profile(
    gen: &AssembledGenerator,
    o_a: &LocalOperator,
    o_b: &LocalOperator,
    placements: &[Region],
    times: &[f64],
) -> Result<LightconeTable> {
    let lattice = gen.lattice();
    let norm_oa = op_norm(o_a);
    let norm_ob = op_norm(o_b);
    let cells: Vec<Result<Vec<LightconeRow>>> = placements
        .par_iter()
        .map(|b| {
            let ob = place(o_b, b)?;
            let d_ab = lattice.region_distance(o_a.support(), b)?;
            let volume = o_a.support().len().min(b.len()) as f64;
            let evolved = evolve_observable_many(gen, &ob, times)?;
            times
                .iter()
                .zip(evolved)
                .map(|(&t, obt)| {
                    Ok(LightconeRow {
                        d_ab,
                        t,
                        norm: op_norm(&commutator(&obt, o_a)?),
                        norm_oa,
                        norm_ob,
                        volume,
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::with_capacity(placements.len() * times.len());
    for cell in cells {
        rows.extend(cell?);
    }
    Ok(LightconeTable { rows })
}

/// Least-squares fit of `log(norm/(V‖O_A‖‖O_B‖)) = log c − d/ξ + (v/ξ) t`
/// over rows with `1e-12 < norm < 0.1 · 2‖O_A‖‖O_B‖`.
pub fn fit_lightcone(table: &LightconeTable) -> Result<LrFit> {
    let cap_of = |r: &LightconeRow| FIT_CAP_FRACTION * 2.0 * r.norm_oa * r.norm_ob;
    let used: Vec<&LightconeRow> = table
        .rows
        .iter()
        .filter(|r| r.norm > FIT_FLOOR && r.norm < cap_of(r) && r.volume > 0.0)
        .collect();
    if used.len() < FIT_MIN_ROWS {
        return Err(Error::InsufficientData {
            rows: used.len(),
            required: FIT_MIN_ROWS,
        });
    }
    let x = Array2::from_shape_fn((used.len(), 3), |(i, k)| match k {
        0 => 1.0,
        1 => used[i].d_ab,
        _ => used[i].t,
    });
    let y: Array1<f64> = used
        .iter()
        .map(|r| (r.norm / (r.volume * r.norm_oa * r.norm_ob)).ln())
        .collect();
    let (beta, r_squared) = least_squares(&x, &y)?;
    let xi = -1.0 / beta[1];
    let v = beta[2] * xi;
    if !(xi > 0.0 && xi.is_finite()) || !(v > 0.0 && v.is_finite()) {
        return Err(Error::DegenerateFit(format!("fitted v = {v}, xi = {xi}")));
    }
    let cap = used.iter().map(|r| cap_of(r)).fold(0.0, f64::max);
    Ok(LrFit {
        c: beta[0].exp(),
        v,
        xi,
        r_squared,
        window: (FIT_FLOOR, cap),
        rows_used: used.len(),
    })
}

/// Whether, at every time and outside the cone `d > v t`, no distance has a
/// larger norm than any closer distance (up to `slack`).
pub fn envelope_is_monotone(table: &LightconeTable, v: f64, slack: f64) -> bool {
    let mut times: Vec<f64> = table.rows.iter().map(|r| r.t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times.iter().all(|&t| {
        let mut pts: Vec<(f64, f64)> = table
            .rows
            .iter()
            .filter(|r| r.t == t && r.d_ab > v * t)
            .map(|r| (r.d_ab, r.norm))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut far_max = 0.0f64;
        pts.iter().rev().all(|&(_, n)| {
            let ok = far_max <= n + slack;
            far_max = far_max.max(n);
            ok
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignalingBound {
    pub probability: f64,
    pub clamped: bool,
}

/// `ε ‖[O_B(t), O_A]‖`, clamped to `[0, 1]`.
pub fn signaling_bound(epsilon: f64, norm: f64) -> SignalingBound {
    let raw = epsilon * norm;
    let probability = raw.clamp(0.0, 1.0);
    SignalingBound {
        probability,
        clamped: probability != raw,
    }
}
