//! Measurable claims: commutator light-cones, the `M_O(X,t)` quantity,
//! factorization under decoupled dynamics and clustering of correlations.

pub mod clustering;
pub mod lightcone;
pub mod mvalue;

use ndarray::{Array1, Array2};
use ndarray_linalg::LeastSquaresSvd;

pub use clustering::{
    clustering_sweep, decoupling_check, stationary_correlation, ClusteringFit, ClusteringInputs, ClusteringRow,
    Correlation, DecouplingReport, ProductState,
};
pub use lightcone::{
    commutator_profile, envelope_is_monotone, fit_lightcone, place, signaling_bound, LightconeRow, LightconeTable,
    LrFit, SignalingBound,
};
pub use mvalue::{m_ratio, m_recursion_check, m_value_estimate, RecursionEntry, RecursionReport};

use crate::error::{Error, Result};
use crate::lindblad::AssembledGenerator;
use crate::operator::{op_norm, LocalOperator};
use crate::propagate::evolve_observable;

/// Least-squares coefficients and `r²` of `y ≈ x β`.
pub(crate) fn least_squares(x: &Array2<f64>, y: &Array1<f64>) -> Result<(Array1<f64>, f64)> {
    let beta = x.least_squares(y)?.solution;
    let fitted = x.dot(&beta);
    let mean = y.mean().unwrap_or(0.0);
    let ss_res: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|a| (a - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::DegenerateFit("no variation in the fitted quantity".into()));
    }
    Ok((beta, (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)))
}

/// `‖(O_A O_B)(t) − O_A(t) O_B(t)‖` for Heisenberg evolution. Nonzero for
/// dissipative dynamics coupling the supports: the Heisenberg map is not
/// multiplicative.
pub fn leibniz_residual(gen: &AssembledGenerator, o_a: &LocalOperator, o_b: &LocalOperator, t: f64) -> Result<f64> {
    let joint = evolve_observable(gen, &o_a.mul(o_b)?, t)?;
    let split = evolve_observable(gen, o_a, t)?.mul(&evolve_observable(gen, o_b, t)?)?;
    Ok(op_norm(&joint.sub(&split)?))
}
