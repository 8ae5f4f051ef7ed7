//! Sampled lower bounds on `M_O(X, t) = sup_𝒯 ‖𝒯 e^{ℒt}[O]‖ / ‖𝒯‖` over
//! Lindblad-form `𝒯` supported on `X`, and the integral recursion they obey.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::Region;
use crate::lindblad::{AssembledGenerator, LocalTerm, Picture};
use crate::operator::{op_norm, random_hermitian, random_matrix, LocalOperator, Matrix};
use crate::propagate::evolve_observable_many;
use crate::rng::cell_rng;

/// `‖𝒯[O]‖ / b(𝒯)` in the Heisenberg picture; `b` bounds the induced norm,
/// so this never exceeds the ratio with the true norm.
pub fn m_ratio(term: &LocalTerm, op: &LocalOperator) -> Result<f64> {
    let b = term.norm_bound();
    if b == 0.0 {
        return Ok(0.0);
    }
    Ok(op_norm(&term.apply(Picture::Heisenberg, op)?) / b)
}

fn random_term<R: Rng>(rng: &mut R, x: &Region, dims: &[usize]) -> Result<LocalTerm> {
    let d: usize = dims.iter().product();
    let scale = rng.random::<f64>();
    let h = random_hermitian(rng, d).mapv(|z| z * scale);
    let n_jumps = rng.random_range(1..=2);
    let jumps = (0..n_jumps)
        .map(|_| {
            let s = rng.random::<f64>();
            random_matrix(rng, d).mapv(|z| z * s)
        })
        .collect();
    LocalTerm::new(x.clone(), dims.to_vec(), h, jumps)
}

/// Max of [`m_ratio`] over the generator's own terms inside `x` and
/// `samples` random terms on `x`. Sample `s` draws from stream `s` of
/// `seed`, so more samples never lower the estimate.
pub fn m_value_at(gen: &AssembledGenerator, x: &Region, evolved: &LocalOperator, samples: usize, seed: u64) -> Result<f64> {
    if !x.intersects(evolved.support()) {
        // trace-preserving terms annihilate the identity
        return Ok(0.0);
    }
    let dims = gen.lattice().dims_of(x);
    let mut best = 0.0f64;
    for (term, _) in gen.active_terms().filter(|(t, _)| t.support().is_subset(x)) {
        let (h, jumps) = lift(term, x, &dims)?;
        best = best.max(m_ratio(&LocalTerm::new(x.clone(), dims.clone(), h, jumps)?, evolved)?);
    }
    for s in 0..samples {
        let mut rng = cell_rng(seed, s as u64);
        best = best.max(m_ratio(&random_term(&mut rng, x, &dims)?, evolved)?);
    }
    Ok(best)
}

/// A term's Hamiltonian and jumps embedded on the larger region `x`.
fn lift(term: &LocalTerm, x: &Region, dims: &[usize]) -> Result<(Matrix, Vec<Matrix>)> {
    let embed = |m: &Matrix| -> Result<Matrix> {
        Ok(LocalOperator::new(term.support().clone(), term.dims().to_vec(), m.clone())?
            .embed(x, dims)?
            .into_matrix())
    };
    let h = embed(term.hamiltonian())?;
    let jumps = term.jumps().iter().map(embed).collect::<Result<_>>()?;
    Ok((h, jumps))
}

/// Lower-bound estimate of `M_O(X, t)` for a Heisenberg generator.
pub fn m_value_estimate(gen: &AssembledGenerator, x: &Region, op: &LocalOperator, t: f64, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Validation {
            field: "samples".into(),
            line: None,
            reason: "need at least one sample".into(),
        });
    }
    let evolved = evolve_observable_many(gen, op, &[t])?.pop().expect("one time");
    m_value_at(gen, x, &evolved, samples, seed)
}

#[derive(Debug, Clone, Serialize)]
pub struct RecursionEntry {
    pub x: Vec<usize>,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecursionReport {
    /// Factor applied to the integrated estimates to turn sampled maxima
    /// into working upper bounds.
    pub slack: f64,
    pub entries: Vec<RecursionEntry>,
    pub min_margin: f64,
}

impl RecursionReport {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.min_margin >= -tolerance
    }
}

pub const DEFAULT_RECURSION_SLACK: f64 = 1.1;

/// Check `M(X,t) ≤ M(X,0) + slack · Σ_Y b(Y) ∫₀ᵗ M(Y,s) ds` where `Y` runs
/// over the generator's terms meeting `X` and `b(Y)` is the term's
/// physical norm bound. Both sides are sampled estimates, so the report is
/// advisory. The grid must start at 0; integrals use the trapezoid rule.
pub fn m_recursion_check(
    gen: &AssembledGenerator,
    op: &LocalOperator,
    x_list: &[Region],
    times: &[f64],
    samples: usize,
    seed: u64,
    slack: f64,
) -> Result<RecursionReport> {
    if times.first() != Some(&0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation {
            field: "times".into(),
            line: None,
            reason: "grid must start at 0 and increase".into(),
        });
    }
    let evolved = evolve_observable_many(gen, op, times)?;
    let scale = gen.time_scale();
    let terms: Vec<(Region, f64)> = gen
        .active_terms()
        .map(|(t, w)| (t.support().clone(), w * t.norm_bound() * scale))
        .collect();
    // M(Y, s) for every region needed, on the whole grid
    let mut regions: Vec<Region> = x_list.to_vec();
    for (y, _) in &terms {
        if x_list.iter().any(|x| x.intersects(y)) && !regions.contains(y) {
            regions.push(y.clone());
        }
    }
    let m: Vec<Vec<f64>> = regions
        .iter()
        .map(|r| evolved.iter().map(|o| m_value_at(gen, r, o, samples, seed)).collect())
        .collect::<Result<_>>()?;
    let integral = |k: usize, upto: usize| -> f64 {
        (1..=upto)
            .map(|i| 0.5 * (m[k][i] + m[k][i - 1]) * (times[i] - times[i - 1]))
            .sum()
    };
    let mut entries = Vec::new();
    for (xi, x) in x_list.iter().enumerate() {
        for (ti, &t) in times.iter().enumerate() {
            let mut source = 0.0;
            for (y, b) in terms.iter().filter(|(y, _)| y.intersects(x)) {
                let k = regions.iter().position(|r| r == y).expect("region collected");
                source += b * integral(k, ti);
            }
            let lhs = m[xi][ti];
            let rhs = m[xi][0] + slack * source;
            entries.push(RecursionEntry {
                x: x.sites().to_vec(),
                t,
                lhs,
                rhs,
                margin: rhs - lhs,
            });
        }
    }
    let min_margin = entries.iter().map(|e| e.margin).fold(f64::INFINITY, f64::min);
    Ok(RecursionReport {
        slack,
        entries,
        min_margin,
    })
}
