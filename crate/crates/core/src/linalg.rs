//! Small numerical kernels: dot products, Jacobi-preconditioned conjugate
//! gradient, and dense symmetric solves.

use nalgebra::{DMatrix, DVector};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone)]
pub(crate) struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Solves `A x = b` for symmetric positive (semi)definite `A` given as a
/// matrix-free operator. Stops when `||r|| <= tol * ||b||`.
pub(crate) fn pcg<F>(mut apply: F, diag: &[f64], b: &[f64], x0: Option<&[f64]>, tol: f64, max_iter: usize) -> CgOutcome
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let b_norm = norm(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if n == 0 || b_norm == 0.0 {
        return CgOutcome { x: vec![0.0; n], iterations: 0, relative_residual: 0.0, converged: true };
    }
    let inv_diag: Vec<f64> = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut ap = vec![0.0; n];
    let mut r = b.to_vec();
    if x0.is_some() {
        apply(&x, &mut ap);
        for i in 0..n {
            r[i] -= ap[i];
        }
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rel = norm(&r) / b_norm;
    let mut iterations = 0;
    while rel > tol && iterations < max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        iterations += 1;
        rel = norm(&r) / b_norm;
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgOutcome { x, iterations, relative_residual: rel, converged: rel <= tol }
}

/// Cholesky factor of a dense SPD matrix, `None` when not positive definite.
pub(crate) fn cholesky(matrix: DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    matrix.cholesky()
}

pub(crate) fn solve_spd(matrix: &DMatrix<f64>, rhs: &[f64]) -> Option<Vec<f64>> {
    let chol = cholesky(matrix.clone())?;
    Some(chol.solve(&DVector::from_column_slice(rhs)).as_slice().to_vec())
}

/// Index of the first column that is (numerically) a linear combination of
/// the previous ones, judged by pivots of an incremental Cholesky relative to
/// the column's own scale.
pub(crate) fn first_dependent_column(gram: &DMatrix<f64>, rel_tol: f64) -> Option<usize> {
    let n = gram.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = gram[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= rel_tol * gram[(j, j)].abs().max(f64::MIN_POSITIVE) {
            return Some(j);
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = gram[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    None
}
