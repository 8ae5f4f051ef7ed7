//! Dense matrix exponential by scaling and squaring with a diagonal Padé
//! approximant (Higham 2005 degrees 3, 5, 7, 9 and 13).

use ndarray::Array2;
use ndarray_linalg::Inverse;

use crate::error::{Error, Result};
use crate::operator::Matrix;
use crate::{C64, ZERO};

pub const EXPM_MAX_DIM: usize = 4096;

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152e0;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn norm1(a: &Matrix) -> f64 {
    a.columns()
        .into_iter()
        .map(|c| c.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn axpy_sum(terms: &[(f64, &Matrix)], n: usize) -> Matrix {
    let mut out = Array2::zeros((n, n));
    for &(c, m) in terms {
        out.scaled_add(C64::new(c, 0.0), m);
    }
    out
}

/// `exp(t A)`.
pub fn expm_dense(a: &Matrix, t: f64) -> Result<Matrix> {
    let n = a.nrows();
    if n > EXPM_MAX_DIM {
        return Err(Error::DimensionTooLarge {
            dim: n,
            max: EXPM_MAX_DIM,
        });
    }
    if a.ncols() != n {
        return Err(Error::BadShape(format!("expm of a {:?} matrix", a.dim())));
    }
    let a = a.mapv(|v| v * t);
    let nrm = norm1(&a);
    if nrm == 0.0 {
        return Ok(Matrix::eye(n));
    }
    if !nrm.is_finite() {
        return Err(Error::BadShape("expm of a non-finite matrix".into()));
    }
    let id = Matrix::eye(n);
    for &(m, theta) in &THETA {
        if nrm <= theta {
            return pade_low(&a, &id, m);
        }
    }
    let s = ((nrm / THETA_13).log2().ceil()).max(0.0) as i32;
    let a = a.mapv(|v| v / 2f64.powi(s));
    let mut r = pade13(&a, &id)?;
    for _ in 0..s {
        r = r.dot(&r);
    }
    Ok(r)
}

fn pade_low(a: &Matrix, id: &Matrix, m: usize) -> Result<Matrix> {
    let n = a.nrows();
    let b: &[f64] = match m {
        3 => &B3,
        5 => &B5,
        7 => &B7,
        _ => &B9,
    };
    let a2 = a.dot(a);
    let mut powers = vec![id.clone(), a2.clone()];
    while powers.len() <= m / 2 {
        let next = powers.last().unwrap().dot(&a2);
        powers.push(next);
    }
    let mut u = Array2::zeros((n, n));
    let mut v = Array2::zeros((n, n));
    for (k, p) in powers.iter().enumerate() {
        u.scaled_add(C64::new(b[2 * k + 1], 0.0), p);
        v.scaled_add(C64::new(b[2 * k], 0.0), p);
    }
    let u = a.dot(&u);
    solve_pade(&u, &v)
}

fn pade13(a: &Matrix, id: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    let b = &B13;
    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let inner_u = axpy_sum(&[(b[13], &a6), (b[11], &a4), (b[9], &a2)], n);
    let outer_u = axpy_sum(&[(b[7], &a6), (b[5], &a4), (b[3], &a2), (b[1], id)], n);
    let u = a.dot(&(a6.dot(&inner_u) + outer_u));
    let inner_v = axpy_sum(&[(b[12], &a6), (b[10], &a4), (b[8], &a2)], n);
    let outer_v = axpy_sum(&[(b[6], &a6), (b[4], &a4), (b[2], &a2), (b[0], id)], n);
    let v = a6.dot(&inner_v) + outer_v;
    solve_pade(&u, &v)
}

/// `(V - U)⁻¹ (V + U)`.
fn solve_pade(u: &Matrix, v: &Matrix) -> Result<Matrix> {
    let q = v - u;
    let p = v + u;
    let qi = q.inv()?;
    Ok(qi.dot(&p))
}

/// Truncated Taylor series with compensated (Kahan) summation; an
/// independent reference for small, modest-norm matrices.
pub fn expm_taylor(a: &Matrix, t: f64, terms: usize) -> Matrix {
    let n = a.nrows();
    let at = a.mapv(|v| v * t);
    let mut sum = Matrix::eye(n);
    let mut comp: Matrix = Array2::from_elem((n, n), ZERO);
    let mut term = Matrix::eye(n);
    for k in 1..terms {
        term = term.dot(&at).mapv(|v| v / k as f64);
        for ((s, c), &x) in sum.iter_mut().zip(comp.iter_mut()).zip(term.iter()) {
            let y = x - *c;
            let tot = *s + y;
            *c = (tot - *s) - y;
            *s = tot;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{max_abs_diff, random_matrix};
    use crate::rng::cell_rng;
    use crate::ONE;

    #[test]
    fn zero_matrix_gives_identity() {
        let z = Matrix::zeros((5, 5));
        assert_eq!(expm_dense(&z, 3.0).unwrap(), Matrix::eye(5));
    }

    #[test]
    fn nilpotent_series_truncates() {
        let a = Matrix::from_shape_vec((2, 2), vec![ZERO, ONE, ZERO, ZERO]).unwrap();
        let e = expm_dense(&a, 1.0).unwrap();
        let expect = Matrix::from_shape_vec((2, 2), vec![ONE, ONE, ZERO, ONE]).unwrap();
        assert!(max_abs_diff(&e, &expect) < 1e-15);
    }

    #[test]
    fn matches_taylor_oracle() {
        let mut rng = cell_rng(31, 0);
        let a = random_matrix(&mut rng, 16).mapv(|v| v * 0.25);
        let e = expm_dense(&a, 0.7).unwrap();
        let oracle = expm_taylor(&a, 0.7, 40);
        let scale = oracle.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(max_abs_diff(&e, &oracle) < 1e-10 * scale);
    }

    #[test]
    fn every_pade_degree_is_accurate() {
        let mut rng = cell_rng(32, 0);
        let a = random_matrix(&mut rng, 6);
        let n1 = norm1(&a);
        for target in [0.01, 0.2, 0.9, 2.0, 5.0, 40.0] {
            let t = target / n1;
            let e = expm_dense(&a, t).unwrap();
            // split into many small steps so the series converges quickly
            let k = 64;
            let step = expm_taylor(&a, t / k as f64, 30);
            let mut oracle = Matrix::eye(6);
            for _ in 0..k {
                oracle = oracle.dot(&step);
            }
            let scale = oracle.iter().map(|v| v.norm()).fold(1.0, f64::max);
            assert!(max_abs_diff(&e, &oracle) < 1e-11 * scale, "norm {target}");
        }
    }

    #[test]
    fn diagonal_exponential() {
        let mut a = Matrix::zeros((3, 3));
        a[[0, 0]] = C64::new(-1.0, 2.0);
        a[[1, 1]] = C64::new(0.5, 0.0);
        a[[2, 2]] = C64::new(-30.0, 0.0);
        let e = expm_dense(&a, 1.0).unwrap();
        for i in 0..3 {
            assert!((e[[i, i]] - a[[i, i]].exp()).norm() < 1e-13 * a[[i, i]].exp().norm().max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn too_large_rejected() {
        let a = Matrix::zeros((EXPM_MAX_DIM + 1, 1));
        assert!(matches!(expm_dense(&a, 1.0), Err(Error::DimensionTooLarge { .. })));
    }
}
