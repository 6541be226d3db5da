//! Matrix-free access to the two-way fixed-effects design.
//!
//! Parameters are stacked as `(alpha, psi, beta)`. Worker effects are
//! absorbed by within-worker demeaning, which leaves a reduced system
//! `C v = r` in `v = (psi_1 .. psi_{J-1}, beta)`; the first firm is grounded
//! at zero so that `C` is positive definite on a connected set. Solving the
//! reduced system and back-substituting worker means applies a reflexive
//! generalized inverse of the full cross-product matrix.

use nalgebra::DMatrix;

use crate::linalg::{cholesky, pcg, CgOutcome};
use crate::panel::Panel;

pub(crate) struct Design<'a> {
    pub panel: &'a Panel,
    pub n_firms: usize,
    pub k: usize,
    /// Reduced dimension `n_firms - 1 + k`.
    pub m: usize,
    pub worker_counts: Vec<f64>,
    pub firm_sizes: Vec<f64>,
}

impl<'a> Design<'a> {
    pub fn new(panel: &'a Panel) -> Self {
        let k = panel.covariate_count();
        let n_firms = panel.n_firms();
        Design {
            panel,
            n_firms,
            k,
            m: n_firms - 1 + k,
            worker_counts: panel.worker_counts().into_iter().map(|c| c as f64).collect(),
            firm_sizes: panel.firm_sizes().into_iter().map(|c| c as f64).collect(),
        }
    }

    pub fn n_obs(&self) -> usize {
        self.panel.n_obs()
    }

    pub fn n_workers(&self) -> usize {
        self.worker_counts.len()
    }

    #[inline]
    fn beta_offset(&self) -> usize {
        self.n_firms - 1
    }

    /// `f_o . v` for the reduced row of observation `o`.
    #[inline]
    pub fn row_dot(&self, o: usize, v: &[f64]) -> f64 {
        let f = self.panel.firms()[o];
        let mut s = if f > 0 { v[f - 1] } else { 0.0 };
        if self.k > 0 {
            let x = self.panel.covariates(o);
            let b = &v[self.beta_offset()..];
            for c in 0..self.k {
                s += x[c] * b[c];
            }
        }
        s
    }

    /// `out += scale * f_o`.
    #[inline]
    pub fn add_row(&self, o: usize, scale: f64, out: &mut [f64]) {
        let f = self.panel.firms()[o];
        if f > 0 {
            out[f - 1] += scale;
        }
        if self.k > 0 {
            let x = self.panel.covariates(o);
            let off = self.beta_offset();
            for c in 0..self.k {
                out[off + c] += scale * x[c];
            }
        }
    }

    /// Reduced operator `C v = F~' M_D F~ v`.
    pub fn apply_c(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let mut z = Vec::new();
        for w in 0..self.n_workers() {
            let range = self.panel.worker_range(w);
            z.clear();
            z.extend(range.clone().map(|o| self.row_dot(o, v)));
            let mean = z.iter().sum::<f64>() / z.len() as f64;
            for (o, zo) in range.zip(&z) {
                self.add_row(o, zo - mean, out);
            }
        }
    }

    pub fn c_diagonal(&self) -> Vec<f64> {
        let mut diag = vec![0.0; self.m];
        let off = self.beta_offset();
        let mut firm_counts: Vec<(usize, f64)> = Vec::new();
        let mut xsum = vec![0.0; self.k];
        for w in 0..self.n_workers() {
            let range = self.panel.worker_range(w);
            let t = range.len() as f64;
            firm_counts.clear();
            xsum.iter_mut().for_each(|x| *x = 0.0);
            for o in range.clone() {
                let f = self.panel.firms()[o];
                if f > 0 {
                    diag[f - 1] += 1.0;
                    match firm_counts.iter_mut().find(|(g, _)| *g == f) {
                        Some(slot) => slot.1 += 1.0,
                        None => firm_counts.push((f, 1.0)),
                    }
                }
                let x = self.panel.covariates(o);
                for c in 0..self.k {
                    diag[off + c] += x[c] * x[c];
                    xsum[c] += x[c];
                }
            }
            for &(f, c) in &firm_counts {
                diag[f - 1] -= c * c / t;
            }
            for c in 0..self.k {
                diag[off + c] -= xsum[c] * xsum[c] / t;
            }
        }
        diag
    }

    /// Reduced right-hand side for a full-space vector `u = (u_alpha, u_psi, u_beta)`:
    /// `u_red - sum_i h_i u_alpha_i / T_i`, where `u_red` drops the grounded firm.
    pub fn reduce_rhs(&self, u_alpha: &[f64], u_psi: &[f64], u_beta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        out[..self.n_firms - 1].copy_from_slice(&u_psi[1..]);
        out[self.beta_offset()..].copy_from_slice(u_beta);
        for w in 0..self.n_workers() {
            let scale = u_alpha[w] / self.worker_counts[w];
            if scale != 0.0 {
                for o in self.panel.worker_range(w) {
                    self.add_row(o, -scale, &mut out);
                }
            }
        }
        out
    }

    /// Reduced normal-equation right-hand side for data `y`: `F~' M_D y`.
    pub fn ls_rhs(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for w in 0..self.n_workers() {
            let range = self.panel.worker_range(w);
            let mean = y[range.clone()].iter().sum::<f64>() / range.len() as f64;
            for o in range {
                self.add_row(o, y[o] - mean, &mut out);
            }
        }
        out
    }

    /// Worker effects `(u_alpha_i - h_i . v) / T_i`.
    pub fn back_substitute(&self, u_alpha: &[f64], v: &[f64]) -> Vec<f64> {
        (0..self.n_workers())
            .map(|w| {
                let hv: f64 = self.panel.worker_range(w).map(|o| self.row_dot(o, v)).sum();
                (u_alpha[w] - hv) / self.worker_counts[w]
            })
            .collect()
    }

    /// Expands reduced `v` into `(psi, beta)` with the grounded firm at zero.
    pub fn expand(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut psi = Vec::with_capacity(self.n_firms);
        psi.push(0.0);
        psi.extend_from_slice(&v[..self.n_firms - 1]);
        (psi, v[self.beta_offset()..].to_vec())
    }

    /// Per-observation `alpha_i + psi_j + x'beta` for a full-space vector.
    pub fn apply_z(&self, alpha: &[f64], psi: &[f64], beta: &[f64]) -> Vec<f64> {
        let p = self.panel;
        (0..self.n_obs())
            .map(|o| {
                let x = p.covariates(o);
                alpha[p.workers()[o]] + psi[p.firms()[o]] + x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    /// `Z' e` split into worker, firm and covariate blocks.
    pub fn apply_zt(&self, e: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let p = self.panel;
        let mut ua = vec![0.0; self.n_workers()];
        let mut up = vec![0.0; self.n_firms];
        let mut ub = vec![0.0; self.k];
        for o in 0..self.n_obs() {
            ua[p.workers()[o]] += e[o];
            up[p.firms()[o]] += e[o];
            for (c, x) in p.covariates(o).iter().enumerate() {
                ub[c] += x * e[o];
            }
        }
        (ua, up, ub)
    }

    /// Dense reduced matrix `C`.
    pub fn dense_c(&self) -> DMatrix<f64> {
        let m = self.m;
        let mut c = DMatrix::<f64>::zeros(m, m);
        let mut h: Vec<(usize, f64)> = Vec::new();
        let mut row: Vec<(usize, f64)> = Vec::new();
        for w in 0..self.n_workers() {
            let range = self.panel.worker_range(w);
            let t = range.len() as f64;
            h.clear();
            for o in range {
                row.clear();
                self.sparse_row(o, &mut row);
                for &(a, va) in &row {
                    for &(b, vb) in &row {
                        c[(a, b)] += va * vb;
                    }
                    accumulate(&mut h, a, va);
                }
            }
            for &(a, va) in &h {
                for &(b, vb) in &h {
                    c[(a, b)] -= va * vb / t;
                }
            }
        }
        c
    }

    /// Nonzero entries of the reduced row `f_o`.
    pub fn sparse_row(&self, o: usize, out: &mut Vec<(usize, f64)>) {
        let f = self.panel.firms()[o];
        if f > 0 {
            out.push((f - 1, 1.0));
        }
        let off = self.beta_offset();
        for (c, &x) in self.panel.covariates(o).iter().enumerate() {
            out.push((off + c, x));
        }
    }

    /// `h_i = sum_{o in i} f_o` as a sparse vector.
    pub fn worker_sum(&self, w: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let mut row = Vec::new();
        for o in self.panel.worker_range(w) {
            row.clear();
            self.sparse_row(o, &mut row);
            for &(a, v) in &row {
                accumulate(out, a, v);
            }
        }
    }
}

pub(crate) fn accumulate(vec: &mut Vec<(usize, f64)>, index: usize, value: f64) {
    match vec.iter_mut().find(|(i, _)| *i == index) {
        Some(slot) => slot.1 += value,
        None => vec.push((index, value)),
    }
}

/// Solves the reduced system; applied repeatedly by the correction backends.
pub(crate) trait ReducedSolver {
    fn solve(&self, rhs: &[f64]) -> ReducedSolve;
}

pub(crate) struct ReducedSolve {
    pub v: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

impl From<CgOutcome> for ReducedSolve {
    fn from(o: CgOutcome) -> Self {
        ReducedSolve {
            v: o.x,
            iterations: o.iterations,
            relative_residual: o.relative_residual,
            converged: o.converged,
        }
    }
}

pub(crate) struct CgReduced<'d, 'a> {
    pub design: &'d Design<'a>,
    pub diag: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl<'d, 'a> CgReduced<'d, 'a> {
    pub fn new(design: &'d Design<'a>, tol: f64, max_iter: usize) -> Self {
        CgReduced { diag: design.c_diagonal(), design, tol, max_iter }
    }
}

impl ReducedSolver for CgReduced<'_, '_> {
    fn solve(&self, rhs: &[f64]) -> ReducedSolve {
        pcg(|x, y| self.design.apply_c(x, y), &self.diag, rhs, None, self.tol, self.max_iter).into()
    }
}

/// Dense factorization of `C` with its explicit inverse.
pub(crate) struct DenseReduced {
    pub inverse: DMatrix<f64>,
}

impl DenseReduced {
    pub fn new(design: &Design<'_>) -> Option<Self> {
        let m = design.m;
        if m == 0 {
            return Some(DenseReduced { inverse: DMatrix::zeros(0, 0) });
        }
        let chol = cholesky(design.dense_c())?;
        Some(DenseReduced { inverse: chol.inverse() })
    }
}

impl ReducedSolver for DenseReduced {
    fn solve(&self, rhs: &[f64]) -> ReducedSolve {
        let m = rhs.len();
        let mut v = vec![0.0; m];
        for i in 0..m {
            let mut s = 0.0;
            for j in 0..m {
                s += self.inverse[(i, j)] * rhs[j];
            }
            v[i] = s;
        }
        ReducedSolve { v, iterations: 1, relative_residual: 0.0, converged: true }
    }
}
