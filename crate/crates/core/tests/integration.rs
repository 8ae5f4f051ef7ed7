use std::path::{Path, PathBuf};

use ndarray::Array1;
use ndarray_linalg::Solve;
use lrcone::experiments::stationary_correlation;
use lrcone::io::load_model;
use lrcone::operator::{kron, pauli_x, pauli_z, sigma_minus, site_op, Matrix};
use lrcone::spectral::stationary_state;
use lrcone::{models, Picture, C64};

fn models_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn eye(d: usize) -> Matrix {
    Matrix::eye(d)
}

/// `m` acting on site `x` of an `n`-qubit chain, site 0 most significant.
fn on_site(m: &Matrix, x: usize, n: usize) -> Matrix {
    let id = eye(2);
    (0..n).fold(eye(1), |acc, y| kron(&acc, if y == x { m } else { &id }))
}

/// Column-stacked Schrödinger generator built straight from
/// `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.
fn dense_lindbladian(h: &Matrix, jumps: &[Matrix]) -> Matrix {
    let d = h.nrows();
    let i = C64::new(0.0, 1.0);
    let id = eye(d);
    let mut l = (kron(&id, h) - kron(&h.t().to_owned(), &id)).mapv(|z| -i * z);
    for j in jumps {
        let jd = j.t().mapv(|z| z.conj());
        let jdj = jd.dot(j);
        l = l + kron(&j.mapv(|z| z.conj()), j)
            - kron(&id, &jdj).mapv(|z| z * 0.5)
            - kron(&jdj.t().to_owned(), &id).mapv(|z| z * 0.5);
    }
    l
}

/// Kernel state from the bordered system: the trace functional replaces the
/// first (linearly dependent) row.
fn kernel_state(l: &Matrix, d: usize) -> Matrix {
    let mut m = l.clone();
    m.row_mut(0).fill(C64::new(0.0, 0.0));
    for r in 0..d {
        m[[0, r + d * r]] = C64::new(1.0, 0.0);
    }
    let mut rhs = Array1::zeros(d * d);
    rhs[0] = C64::new(1.0, 0.0);
    let x = m.solve_into(rhs).unwrap();
    Matrix::from_shape_fn((d, d), |(r, c)| x[r + d * c])
}

#[test]
fn shipped_models_load() {
    let spec = load_model(models_dir().join("ising_damped_chain.model")).unwrap();
    assert_eq!(spec.name, "ising_damped_chain");
    assert_eq!(spec.instantiate().unwrap().terms.len(), 19);
    let mut count = 0;
    for entry in std::fs::read_dir(models_dir()).unwrap() {
        let spec = load_model(entry.unwrap().path()).unwrap();
        let model = spec.instantiate().unwrap();
        assert!(model.generator(Picture::Heisenberg).unwrap().unitality_residual() < 1e-10);
        count += 1;
    }
    assert!(count >= 6);
}

#[test]
fn six_site_correlation_matches_dense_kernel_oracle() {
    let (n, j, hx, gamma) = (6, 1.0, 0.5, 0.2);
    let model = models::ising_damped_chain(n, j, hx, gamma).unwrap();
    let gen = model.generator(Picture::Schroedinger).unwrap();
    let pi = stationary_state(&gen).unwrap();

    let d = 1 << n;
    let z = pauli_z();
    let mut h = Matrix::zeros((d, d));
    for x in 0..n {
        h = h + on_site(&pauli_x(), x, n).mapv(|v| v * hx);
        if x + 1 < n {
            h = h + on_site(&z, x, n).dot(&on_site(&z, x + 1, n)).mapv(|v| v * j);
        }
    }
    let jumps: Vec<Matrix> = (0..n).map(|x| on_site(&sigma_minus(), x, n).mapv(|v| v * gamma.sqrt())).collect();
    let rho = kernel_state(&dense_lindbladian(&h, &jumps), d);

    let z0 = on_site(&z, 0, n);
    let z5 = on_site(&z, 5, n);
    let ex = |o: &Matrix| rho.dot(o).diag().sum().re;
    let joint = ex(&z0.dot(&z5));
    let connected = joint - ex(&z0) * ex(&z5);

    let o_a = site_op(&model.lattice, 0, z.clone()).unwrap();
    let o_b = site_op(&model.lattice, 5, z).unwrap();
    let c = stationary_correlation(&pi, &o_a, &o_b).unwrap();
    assert!((c.joint - joint).abs() < 1e-8, "{} vs {joint}", c.joint);
    assert!((c.connected - connected).abs() < 1e-8, "{} vs {connected}", c.connected);
    assert!(connected.abs() > 1e-8, "oracle correlation should be nonzero");
}
