//! Shipped model families.

use crate::error::Result;
use crate::lattice::{Lattice, Region};
use crate::lindblad::{assemble_normalized, build_local_term, AssembledGenerator, LocalTerm, Picture};
use crate::operator::{named, pauli_x, pauli_z, sigma_minus, LocalOperator, Matrix};

#[derive(Debug, Clone)]
pub struct Model {
    pub name: String,
    pub lattice: Lattice,
    pub terms: Vec<LocalTerm>,
    pub d_star: f64,
}

impl Model {
    /// Normalized generator in `picture`; times stay physical.
    pub fn generator(&self, picture: Picture) -> Result<AssembledGenerator> {
        assemble_normalized(&self.lattice, &self.terms, picture)
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }
}

fn scaled(m: Matrix, c: f64) -> Matrix {
    m.mapv(|v| v * c)
}

fn on(sites: &[usize], factors: &[Matrix]) -> Result<LocalOperator> {
    LocalOperator::product(Region::new(sites.iter().copied()), factors)
}

/// Transverse-field Ising chain `Σ J Z_i Z_{i+1} + h X_i` with one jump
/// `jump(i)` per site. Bond terms come first, then site terms.
fn ising_with_jumps(name: &str, n: usize, j: f64, h: f64, jump: Option<(Matrix, f64)>) -> Result<Model> {
    let lattice = Lattice::chain(n, 2)?;
    let mut terms = Vec::with_capacity(2 * n - 1);
    for i in 0..n.saturating_sub(1) {
        let zz = on(&[i, i + 1], &[scaled(pauli_z(), j), pauli_z()])?;
        terms.push(build_local_term(&lattice, zz.support(), Some(&zz), &[], 1.0)?);
    }
    for i in 0..n {
        let x = on(&[i], &[scaled(pauli_x(), h)])?;
        let jumps = match &jump {
            Some((l, rate)) if *rate > 0.0 => vec![on(&[i], &[scaled(l.clone(), rate.sqrt())])?],
            _ => vec![],
        };
        terms.push(build_local_term(&lattice, &Region::single(i), Some(&x), &jumps, 1.0)?);
    }
    Ok(Model {
        name: name.into(),
        lattice,
        terms,
        d_star: 1.0,
    })
}

/// Ising chain with amplitude damping `√γ σ⁻` on every site.
pub fn ising_damped_chain(n: usize, j: f64, h: f64, gamma: f64) -> Result<Model> {
    ising_with_jumps("ising_damped_chain", n, j, h, Some((sigma_minus(), gamma)))
}

/// Ising chain with dephasing `√γ Z` on every site. For `h = 0` the
/// fixed-point space is degenerate.
pub fn ising_dephasing_chain(n: usize, j: f64, h: f64, gamma: f64) -> Result<Model> {
    ising_with_jumps("ising_dephasing_chain", n, j, h, Some((pauli_z(), gamma)))
}

pub fn ising_unitary_chain(n: usize, j: f64, h: f64) -> Result<Model> {
    ising_with_jumps("ising_unitary_chain", n, j, h, None)
}

/// Classical exclusion process: particles hop in both directions along
/// bonds with rate `r` via `√r σ⁺_i σ⁻_{i+1}` and its mirror image. The
/// generator maps diagonal operators to diagonal operators.
pub fn classical_hopping_chain(n: usize, rate: f64) -> Result<Model> {
    let lattice = Lattice::chain(n, 2)?;
    let sp = named("S+").unwrap();
    let sm = named("S-").unwrap();
    let r = rate.sqrt();
    let mut terms = Vec::new();
    for i in 0..n.saturating_sub(1) {
        let right = on(&[i, i + 1], &[scaled(sp.clone(), r), sm.clone()])?;
        let left = on(&[i, i + 1], &[scaled(sm.clone(), r), sp.clone()])?;
        terms.push(build_local_term(&lattice, right.support(), None, &[right.clone(), left], 1.0)?);
    }
    Ok(Model {
        name: "classical_hopping_chain".into(),
        lattice,
        terms,
        d_star: 1.0,
    })
}

/// Uncoupled sites, each with field `h X` and damping `√γ σ⁻`.
pub fn independent_damped_sites(n: usize, h: f64, gamma: f64) -> Result<Model> {
    let mut m = ising_with_jumps("independent_damped_sites", n, 0.0, h, Some((sigma_minus(), gamma)))?;
    m.terms.drain(..n.saturating_sub(1));
    Ok(m)
}

fn single_qubit(name: &str, h: Option<Matrix>, jumps: Vec<Matrix>) -> Result<Model> {
    let lattice = Lattice::chain(1, 2)?;
    let h = h.map(|m| on(&[0], &[m])).transpose()?;
    let jumps = jumps
        .into_iter()
        .map(|m| on(&[0], &[m]))
        .collect::<Result<Vec<_>>>()?;
    let term = build_local_term(&lattice, &Region::single(0), h.as_ref(), &jumps, 1.0)?;
    Ok(Model {
        name: name.into(),
        lattice,
        terms: vec![term],
        d_star: 1.0,
    })
}

/// Jump `√γ σ⁻`; relaxes to |0⟩⟨0|.
pub fn amplitude_damping(gamma: f64) -> Result<Model> {
    single_qubit("amplitude_damping", None, vec![scaled(sigma_minus(), gamma.sqrt())])
}

/// Jump `√γ Z`; every diagonal state is stationary.
pub fn dephasing(gamma: f64) -> Result<Model> {
    single_qubit("dephasing", None, vec![scaled(pauli_z(), gamma.sqrt())])
}

/// Jumps `√(γ/4) P` for `P ∈ {X, Y, Z}`; relaxes to `I/2`.
pub fn depolarizing(gamma: f64) -> Result<Model> {
    let c = (gamma / 4.0).sqrt();
    let jumps = ["X", "Y", "Z"].iter().map(|p| scaled(named(p).unwrap(), c)).collect();
    single_qubit("depolarizing", None, jumps)
}

/// Precession `½ ω Z` only.
pub fn precession(omega: f64) -> Result<Model> {
    single_qubit("precession", Some(scaled(pauli_z(), 0.5 * omega)), vec![])
}

/// Two independent amplitude-damped qubits.
pub fn two_damped_qubits(gamma: f64) -> Result<Model> {
    let mut m = independent_damped_sites(2, 0.0, gamma)?;
    m.name = "two_damped_qubits".into();
    Ok(m)
}
