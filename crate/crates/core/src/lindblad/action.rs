//! Matrix-free application of a Lindblad generator to a column-stacked
//! operator.
//!
//! Both pictures share the shape
//!
//! `Y = a·P X + b·X Q + Σ_j w_j A_j X B_j`
//!
//! with Schrödinger `(a, P, b, Q, A, B) = (-i, H_eff, i, H_eff†, L, L†)` and
//! Heisenberg `(i, H_eff†, -i, H_eff, L†, L)`, where
//! `H_eff = H - (i/2) Σ L†L`. Cost per application is about
//! `D · (nnz P + nnz Q + Σ nnz A_j + nnz B_j)` for Hilbert dimension `D`,
//! instead of the `D²`-row superoperator.

use rayon::prelude::*;

use crate::sparse::{CsrMatrix, LinearMap};
use crate::{C64, ZERO};

#[derive(Debug, Clone)]
pub struct LindbladAction {
    d: usize,
    a: C64,
    p: CsrMatrix,
    b: C64,
    /// `Q` stored transposed so that row `c` holds column `c` of `Q`.
    qt: CsrMatrix,
    jumps: Vec<Jump>,
}

#[derive(Debug, Clone)]
struct Jump {
    weight: f64,
    a: CsrMatrix,
    /// Non-empty rows of `a`.
    rows: Vec<usize>,
    bt: CsrMatrix,
}

impl LindbladAction {
    /// `h_eff` and `jumps` are global sparse operators in the Schrödinger
    /// convention; `heisenberg` selects the adjoint action.
    pub(crate) fn new(d: usize, h_eff: CsrMatrix, jumps: Vec<(f64, CsrMatrix)>, heisenberg: bool) -> Self {
        let h_eff_dag = h_eff.adjoint();
        let i = C64::new(0.0, 1.0);
        let (a, p, b, q) = if heisenberg {
            (i, h_eff_dag, -i, h_eff)
        } else {
            (-i, h_eff, i, h_eff_dag)
        };
        let jumps = jumps
            .into_iter()
            .map(|(weight, l)| {
                let l_dag = l.adjoint();
                let (a, b) = if heisenberg { (l_dag, l) } else { (l, l_dag) };
                let rows = (0..d).filter(|&r| !a.row(r).0.is_empty()).collect();
                Jump {
                    weight,
                    a,
                    rows,
                    bt: b.transpose(),
                }
            })
            .collect();
        Self {
            d,
            a,
            p,
            b,
            qt: q.transpose(),
            jumps,
        }
    }

    pub fn hilbert_dim(&self) -> usize {
        self.d
    }

    /// Diagonal of the superoperator, entry `r + D c`.
    pub fn diagonal(&self) -> Vec<C64> {
        let d = self.d;
        let diag = |m: &CsrMatrix| -> Vec<C64> {
            (0..d)
                .map(|r| {
                    let (cols, vals) = m.row(r);
                    cols.iter().zip(vals).find(|(&c, _)| c == r).map(|(_, &v)| v).unwrap_or(ZERO)
                })
                .collect()
        };
        let p = diag(&self.p);
        let q = diag(&self.qt);
        let jumps: Vec<(f64, Vec<C64>, Vec<C64>)> =
            self.jumps.iter().map(|j| (j.weight, diag(&j.a), diag(&j.bt))).collect();
        let mut out = vec![ZERO; d * d];
        for c in 0..d {
            for r in 0..d {
                let mut v = self.a * p[r] + self.b * q[c];
                for (w, a, b) in &jumps {
                    v += *w * a[r] * b[c];
                }
                out[r + d * c] = v;
            }
        }
        out
    }

    fn column(&self, x: &[C64], c: usize, y: &mut [C64], tmp: &mut [C64]) {
        let d = self.d;
        let xc = &x[c * d..(c + 1) * d];
        for (r, yr) in y.iter_mut().enumerate() {
            let (cols, vals) = self.p.row(r);
            let s: C64 = cols.iter().zip(vals).map(|(&k, &v)| v * xc[k]).sum();
            *yr = self.a * s;
        }
        let (cols, vals) = self.qt.row(c);
        for (&k, &v) in cols.iter().zip(vals) {
            let f = self.b * v;
            let xk = &x[k * d..(k + 1) * d];
            for (yr, &xv) in y.iter_mut().zip(xk) {
                *yr += f * xv;
            }
        }
        for jump in &self.jumps {
            let (bcols, bvals) = jump.bt.row(c);
            match bcols.len() {
                0 => {}
                1 => {
                    // common case of a single entry: no intermediate column
                    let xk = &x[bcols[0] * d..(bcols[0] + 1) * d];
                    let f = jump.weight * bvals[0];
                    for &r in &jump.rows {
                        let (cols, vals) = jump.a.row(r);
                        let s: C64 = cols.iter().zip(vals).map(|(&k, &v)| v * xk[k]).sum();
                        y[r] += f * s;
                    }
                }
                _ => {
                    tmp.iter_mut().for_each(|t| *t = ZERO);
                    for (&k, &v) in bcols.iter().zip(bvals) {
                        let xk = &x[k * d..(k + 1) * d];
                        for (t, &xv) in tmp.iter_mut().zip(xk) {
                            *t += v * xv;
                        }
                    }
                    for &r in &jump.rows {
                        let (cols, vals) = jump.a.row(r);
                        let s: C64 = cols.iter().zip(vals).map(|(&k, &v)| v * tmp[k]).sum();
                        y[r] += jump.weight * s;
                    }
                }
            }
        }
    }
}

impl LinearMap for LindbladAction {
    fn dim(&self) -> usize {
        self.d * self.d
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let d = self.d;
        assert_eq!(x.len(), d * d);
        assert_eq!(y.len(), d * d);
        if d <= 16 {
            let mut tmp = vec![ZERO; d];
            for (c, yc) in y.chunks_mut(d).enumerate() {
                self.column(x, c, yc, &mut tmp);
            }
            return;
        }
        y.par_chunks_mut(d)
            .enumerate()
            .for_each_init(|| vec![ZERO; d], |tmp, (c, yc)| self.column(x, c, yc, tmp));
    }
}
