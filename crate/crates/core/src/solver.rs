//! Least-squares estimation of worker effects, firm effects and covariate
//! coefficients on a connected set.
//!
//! Four routes solve the same problem:
//!
//! * `Zigzag` alternates exact block minimizations: covariate coefficients by
//!   a small dense regression on partial residuals, worker effects as worker
//!   means, firm effects as firm means.
//! * `ConjugateGradient` absorbs worker effects and runs Jacobi-preconditioned
//!   CG on the reduced firm/covariate system.
//! * `DenseOracle` solves the full normal equations by Cholesky (small
//!   problems only).
//! * `FirstDifferences` removes worker effects by differencing consecutive
//!   observations and recovers them afterwards as worker means.
//!
//! Every route ends with the same normalization (mean firm effect zero, or a
//! reference firm at zero).

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::{CgReduced, Design, ReducedSolver};
use crate::error::{Error, Result};
use crate::linalg::{first_dependent_column, pcg, solve_spd};
use crate::network::{ensure_connected, ConnectedSet, UnionFind};
use crate::panel::Panel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Zigzag,
    ConjugateGradient,
    DenseOracle,
    FirstDifferences,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Zigzag => "zigzag",
            Method::ConjugateGradient => "conjugate_gradient",
            Method::DenseOracle => "dense_oracle",
            Method::FirstDifferences => "first_differences",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acceleration {
    None,
    Aitken,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Unweighted mean of firm effects over the estimation set is zero.
    MeanZeroPsi,
    /// The firm with this external id has effect zero.
    ReferenceFirm(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub method: Method,
    /// Zigzag: max-abs parameter change between sweeps. CG: relative residual norm.
    pub tol: f64,
    pub max_iter: usize,
    pub acceleration: Acceleration,
    pub normalization: Normalization,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::ConjugateGradient,
            tol: 1e-10,
            max_iter: 10_000,
            acceleration: Acceleration::None,
            normalization: Normalization::MeanZeroPsi,
        }
    }
}

impl SolverConfig {
    pub fn with_method(method: Method) -> Self {
        SolverConfig { method, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("solver tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("solver max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub method: Method,
    pub iterations: usize,
    pub final_tolerance: f64,
    /// Residual sum of squares after each zigzag sweep (empty for other methods).
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub rss_path: Vec<f64>,
}

/// Fitted effects on an estimation panel. Vectors are indexed by that
/// panel's dense worker/firm/observation indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    pub alpha: Vec<f64>,
    pub psi: Vec<f64>,
    pub beta: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `n_obs - (n_workers + n_firms - 1 + covariate_count)`; may be non-positive.
    pub dof: i64,
    pub rss: f64,
    pub normalization: Normalization,
    pub convergence: Convergence,
    worker_ids: Vec<String>,
    firm_ids: Vec<String>,
    covariate_names: Vec<String>,
    worker_lookup: HashMap<String, usize>,
    firm_lookup: HashMap<String, usize>,
}

/// JSON fit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub n_obs: usize,
    pub n_workers: usize,
    pub n_firms: usize,
    pub covariate_count: usize,
    pub dof: i64,
    pub iterations: usize,
    pub final_tolerance: f64,
    pub rss: f64,
    pub method: Method,
    pub normalization: Normalization,
}

impl Estimates {
    pub fn n_obs(&self) -> usize {
        self.residuals.len()
    }

    pub fn worker_ids(&self) -> &[String] {
        &self.worker_ids
    }

    pub fn firm_ids(&self) -> &[String] {
        &self.firm_ids
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn worker_effect(&self, id: &str) -> Option<f64> {
        self.worker_lookup.get(id).map(|&i| self.alpha[i])
    }

    pub fn firm_effect(&self, id: &str) -> Option<f64> {
        self.firm_lookup.get(id).map(|&j| self.psi[j])
    }

    /// `sigma^2 = RSS / dof`, or `None` without residual degrees of freedom.
    pub fn sigma2(&self) -> Option<f64> {
        (self.dof > 0).then(|| self.rss / self.dof as f64)
    }

    /// `x'beta + alpha_worker + psi_firm` for entities in the estimation set.
    pub fn predict(&self, worker: &str, firm: &str, covariates: &[f64]) -> Result<f64> {
        let w =
            self.worker_lookup.get(worker).ok_or_else(|| Error::UnknownEntity { kind: "worker", id: worker.into() })?;
        let f = self.firm_lookup.get(firm).ok_or_else(|| Error::UnknownEntity { kind: "firm", id: firm.into() })?;
        if covariates.len() != self.beta.len() {
            return Err(Error::Mismatch(format!("expected {} covariates, got {}", self.beta.len(), covariates.len())));
        }
        let xb: f64 = covariates.iter().zip(&self.beta).map(|(x, b)| x * b).sum();
        Ok(xb + self.alpha[*w] + self.psi[*f])
    }

    /// Per-observation `x'beta` on the estimation panel.
    pub fn xb(&self, panel: &Panel) -> Vec<f64> {
        (0..panel.n_obs()).map(|o| panel.covariates(o).iter().zip(&self.beta).map(|(x, b)| x * b).sum()).collect()
    }

    /// Checks that these estimates were computed on `panel`.
    pub fn check_panel(&self, panel: &Panel) -> Result<()> {
        if panel.n_obs() != self.n_obs()
            || panel.n_workers() != self.alpha.len()
            || panel.n_firms() != self.psi.len()
            || panel.covariate_count() != self.beta.len()
        {
            return Err(Error::Mismatch(format!(
                "estimates cover {} observations/{} workers/{} firms, panel has {}/{}/{}",
                self.n_obs(),
                self.alpha.len(),
                self.psi.len(),
                panel.n_obs(),
                panel.n_workers(),
                panel.n_firms()
            )));
        }
        Ok(())
    }

    pub fn report(&self) -> FitReport {
        FitReport {
            n_obs: self.n_obs(),
            n_workers: self.alpha.len(),
            n_firms: self.psi.len(),
            covariate_count: self.beta.len(),
            dof: self.dof,
            iterations: self.convergence.iterations,
            final_tolerance: self.convergence.final_tolerance,
            rss: self.rss,
            method: self.convergence.method,
            normalization: self.normalization.clone(),
        }
    }
}

/// Estimates the model on `set`, restricting `panel` first when the set does
/// not cover it. The returned estimates are indexed by the restricted panel.
pub fn estimate(panel: &Panel, set: &ConnectedSet, config: &SolverConfig) -> Result<Estimates> {
    if set.covers(panel) {
        estimate_panel(panel, config)
    } else {
        estimate_panel(&set.restrict(panel)?, config)
    }
}

/// Estimates the model by first differences on `set`.
pub fn estimate_first_differences(panel: &Panel, set: &ConnectedSet, config: &SolverConfig) -> Result<Estimates> {
    let config = SolverConfig { method: Method::FirstDifferences, ..config.clone() };
    estimate(panel, set, &config)
}

/// Estimates the model on every observation of `panel`, which must form a
/// single connected set.
pub fn estimate_panel(panel: &Panel, config: &SolverConfig) -> Result<Estimates> {
    config.validate()?;
    let reference = match &config.normalization {
        Normalization::MeanZeroPsi => None,
        Normalization::ReferenceFirm(id) => {
            Some(panel.firm_index(id).ok_or_else(|| Error::UnknownEntity { kind: "firm", id: id.clone() })?)
        }
    };
    check_collinearity(panel)?;
    let raw = match config.method {
        Method::FirstDifferences => first_differences(panel, config)?,
        method => {
            ensure_connected(panel)?;
            match method {
                Method::Zigzag => zigzag(panel, config)?,
                Method::ConjugateGradient => conjugate_gradient(panel, config)?,
                Method::DenseOracle => dense_oracle(panel)?,
                Method::FirstDifferences => unreachable!(),
            }
        }
    };
    Ok(finish(panel, raw, reference, config.normalization.clone()))
}

struct RawSolution {
    alpha: Vec<f64>,
    psi: Vec<f64>,
    beta: Vec<f64>,
    convergence: Convergence,
}

/// Shifts firm effects by the normalization constant, computes residuals.
fn finish(panel: &Panel, mut raw: RawSolution, reference: Option<usize>, normalization: Normalization) -> Estimates {
    let shift = match reference {
        Some(j) => raw.psi[j],
        None => raw.psi.iter().sum::<f64>() / raw.psi.len() as f64,
    };
    raw.psi.iter_mut().for_each(|p| *p -= shift);
    raw.alpha.iter_mut().for_each(|a| *a += shift);
    if let Some(j) = reference {
        raw.psi[j] = 0.0;
    }
    let y = panel.log_wages();
    let residuals: Vec<f64> = (0..panel.n_obs())
        .map(|o| {
            let xb: f64 = panel.covariates(o).iter().zip(&raw.beta).map(|(x, b)| x * b).sum();
            y[o] - xb - raw.alpha[panel.workers()[o]] - raw.psi[panel.firms()[o]]
        })
        .collect();
    let rss = residuals.iter().map(|e| e * e).sum();
    let params = panel.n_workers() + panel.n_firms() - 1 + panel.covariate_count();
    Estimates {
        alpha: raw.alpha,
        psi: raw.psi,
        beta: raw.beta,
        residuals,
        dof: panel.n_obs() as i64 - params as i64,
        rss,
        normalization,
        convergence: raw.convergence,
        worker_ids: panel.worker_ids().to_vec(),
        firm_ids: panel.firm_ids().to_vec(),
        covariate_names: panel.covariate_names().to_vec(),
        worker_lookup: panel.worker_ids().iter().enumerate().map(|(i, s)| (s.clone(), i)).collect(),
        firm_lookup: panel.firm_ids().iter().enumerate().map(|(i, s)| (s.clone(), i)).collect(),
    }
}

/// Rejects covariates without variation inside (worker, firm) match cells,
/// and covariates that are collinear with each other after removing cell means.
pub(crate) fn check_collinearity(panel: &Panel) -> Result<()> {
    let k = panel.covariate_count();
    if k == 0 {
        return Ok(());
    }
    let mut within = vec![0.0; panel.n_obs() * k];
    let mut cells: Vec<(usize, Vec<usize>)> = Vec::new();
    for w in 0..panel.n_workers() {
        cells.clear();
        for o in panel.worker_range(w) {
            let f = panel.firms()[o];
            match cells.iter_mut().find(|(g, _)| *g == f) {
                Some((_, obs)) => obs.push(o),
                None => cells.push((f, vec![o])),
            }
        }
        for (_, obs) in &cells {
            for c in 0..k {
                let mean = obs.iter().map(|&o| panel.covariates(o)[c]).sum::<f64>() / obs.len() as f64;
                for &o in obs {
                    within[o * k + c] = panel.covariates(o)[c] - mean;
                }
            }
        }
    }
    for c in 0..k {
        let scale: f64 = (0..panel.n_obs()).map(|o| panel.covariates(o)[c].powi(2)).sum();
        let ss: f64 = (0..panel.n_obs()).map(|o| within[o * k + c].powi(2)).sum();
        if ss <= 1e-12 * scale || ss == 0.0 {
            return Err(Error::Collinear { column: c });
        }
    }
    let gram = DMatrix::from_fn(k, k, |a, b| (0..panel.n_obs()).map(|o| within[o * k + a] * within[o * k + b]).sum());
    if let Some(column) = first_dependent_column(&gram, 1e-10) {
        return Err(Error::Collinear { column });
    }
    Ok(())
}

fn worker_sums(panel: &Panel, values: &[f64]) -> Vec<f64> {
    (0..panel.n_workers()).map(|w| values[panel.worker_range(w)].iter().sum()).collect()
}

fn zigzag(panel: &Panel, config: &SolverConfig) -> Result<RawSolution> {
    let n = panel.n_obs();
    let k = panel.covariate_count();
    let y = panel.log_wages();
    let workers = panel.workers();
    let firms = panel.firms();
    let counts: Vec<f64> = panel.worker_counts().into_iter().map(|c| c as f64).collect();
    let sizes: Vec<f64> = panel.firm_sizes().into_iter().map(|c| c as f64).collect();
    let xtx = (k > 0)
        .then(|| DMatrix::from_fn(k, k, |a, b| (0..n).map(|o| panel.covariates(o)[a] * panel.covariates(o)[b]).sum()));
    let xtx_chol = match &xtx {
        Some(m) => Some(
            m.clone()
                .cholesky()
                .ok_or_else(|| Error::Collinear { column: first_dependent_column(m, 1e-10).unwrap_or(0) })?,
        ),
        None => None,
    };

    let mut alpha: Vec<f64> = worker_sums(panel, y).iter().zip(&counts).map(|(s, c)| s / c).collect();
    let mut psi = vec![0.0; panel.n_firms()];
    let mut beta = vec![0.0; k];
    let mut xb = vec![0.0; n];
    let mut rss_path = Vec::new();
    let mut history: Vec<Vec<f64>> = Vec::new();
    let mut change = f64::INFINITY;
    let mut iterations = 0;

    let rss_of = |alpha: &[f64], psi: &[f64], xb: &[f64]| -> f64 {
        (0..n).map(|o| (y[o] - xb[o] - alpha[workers[o]] - psi[firms[o]]).powi(2)).sum()
    };
    let alpha_given = |psi: &[f64], xb: &[f64], out: &mut Vec<f64>| {
        out.iter_mut().for_each(|a| *a = 0.0);
        for o in 0..n {
            out[workers[o]] += y[o] - xb[o] - psi[firms[o]];
        }
        out.iter_mut().zip(&counts).for_each(|(a, c)| *a /= c);
    };

    while iterations < config.max_iter {
        iterations += 1;
        let (old_alpha, old_psi, old_beta) = (alpha.clone(), psi.clone(), beta.clone());
        if let Some(chol) = &xtx_chol {
            let mut xtr = nalgebra::DVector::zeros(k);
            for o in 0..n {
                let r = y[o] - alpha[workers[o]] - psi[firms[o]];
                for (c, x) in panel.covariates(o).iter().enumerate() {
                    xtr[c] += x * r;
                }
            }
            beta = chol.solve(&xtr).as_slice().to_vec();
            for o in 0..n {
                xb[o] = panel.covariates(o).iter().zip(&beta).map(|(x, b)| x * b).sum();
            }
        }
        alpha_given(&psi, &xb, &mut alpha);
        psi.iter_mut().for_each(|p| *p = 0.0);
        for o in 0..n {
            psi[firms[o]] += y[o] - xb[o] - alpha[workers[o]];
        }
        psi.iter_mut().zip(&sizes).for_each(|(p, s)| *p /= s);
        let shift = psi.iter().sum::<f64>() / psi.len() as f64;
        psi.iter_mut().for_each(|p| *p -= shift);
        alpha.iter_mut().for_each(|a| *a += shift);

        let mut rss = rss_of(&alpha, &psi, &xb);
        if config.acceleration == Acceleration::Aitken {
            history.push(psi.clone());
            if history.len() == 3 {
                if let Some(candidate) = aitken_extrapolate(&history[0], &history[1], &history[2]) {
                    let mut cand_alpha = alpha.clone();
                    alpha_given(&candidate, &xb, &mut cand_alpha);
                    let cand_rss = rss_of(&cand_alpha, &candidate, &xb);
                    if cand_rss < rss {
                        psi = candidate;
                        alpha = cand_alpha;
                        rss = cand_rss;
                    }
                }
                history.clear();
            }
        }
        rss_path.push(rss);

        change = max_abs_diff(&alpha, &old_alpha).max(max_abs_diff(&psi, &old_psi)).max(max_abs_diff(&beta, &old_beta));
        if change < config.tol {
            return Ok(RawSolution {
                alpha,
                psi,
                beta,
                convergence: Convergence { method: Method::Zigzag, iterations, final_tolerance: change, rss_path },
            });
        }
    }
    Err(Error::NonConvergence { method: "zigzag", iterations, tolerance: change })
}

/// Vector Aitken (Irons-Tuck) extrapolation of three successive iterates.
fn aitken_extrapolate(x0: &[f64], x1: &[f64], x2: &[f64]) -> Option<Vec<f64>> {
    let d1: Vec<f64> = x2.iter().zip(x1).map(|(a, b)| a - b).collect();
    let d2: Vec<f64> = d1.iter().zip(x1.iter().zip(x0)).map(|(d, (a, b))| d - (a - b)).collect();
    let denom: f64 = d2.iter().map(|v| v * v).sum();
    if denom <= f64::MIN_POSITIVE {
        return None;
    }
    let t = d1.iter().zip(&d2).map(|(a, b)| a * b).sum::<f64>() / denom;
    let out: Vec<f64> = x2.iter().zip(&d1).map(|(x, d)| x - t * d).collect();
    out.iter().all(|v| v.is_finite()).then_some(out)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn conjugate_gradient(panel: &Panel, config: &SolverConfig) -> Result<RawSolution> {
    let design = Design::new(panel);
    let y = panel.log_wages();
    let rhs = design.ls_rhs(y);
    let solve = CgReduced::new(&design, config.tol, config.max_iter).solve(&rhs);
    if !solve.converged {
        return Err(Error::NonConvergence {
            method: "conjugate_gradient",
            iterations: solve.iterations,
            tolerance: solve.relative_residual,
        });
    }
    let alpha = design.back_substitute(&worker_sums(panel, y), &solve.v);
    let (psi, beta) = design.expand(&solve.v);
    Ok(RawSolution {
        alpha,
        psi,
        beta,
        convergence: Convergence {
            method: Method::ConjugateGradient,
            iterations: solve.iterations,
            final_tolerance: solve.relative_residual,
            rss_path: Vec::new(),
        },
    })
}

/// Largest parameter count the dense oracle accepts.
pub const DENSE_LIMIT: usize = 6_000;

fn dense_oracle(panel: &Panel) -> Result<RawSolution> {
    let n_w = panel.n_workers();
    let n_f = panel.n_firms();
    let k = panel.covariate_count();
    let dim = n_w + n_f - 1 + k;
    if dim > DENSE_LIMIT {
        return Err(Error::TooLargeForDense { size: dim });
    }
    let mut s = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = vec![0.0; dim];
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(2 + k);
    for obs in panel.observations() {
        row.clear();
        row.push((obs.worker, 1.0));
        if obs.firm > 0 {
            row.push((n_w + obs.firm - 1, 1.0));
        }
        for (c, &x) in obs.covariates.iter().enumerate() {
            row.push((n_w + n_f - 1 + c, x));
        }
        for &(a, va) in &row {
            rhs[a] += va * obs.log_wage;
            for &(b, vb) in &row {
                s[(a, b)] += va * vb;
            }
        }
    }
    let theta =
        solve_spd(&s, &rhs).ok_or(Error::Collinear { column: first_dependent_column(&s, 1e-12).unwrap_or(0) })?;
    let alpha = theta[..n_w].to_vec();
    let mut psi = vec![0.0];
    psi.extend_from_slice(&theta[n_w..n_w + n_f - 1]);
    let beta = theta[n_w + n_f - 1..].to_vec();
    Ok(RawSolution {
        alpha,
        psi,
        beta,
        convergence: Convergence {
            method: Method::DenseOracle,
            iterations: 1,
            final_tolerance: 0.0,
            rss_path: Vec::new(),
        },
    })
}

/// One differenced row: wage change, firm change (origin, destination) and
/// covariate change.
struct DiffRow {
    dy: f64,
    from: usize,
    to: usize,
    obs: usize,
    prev: usize,
}

fn first_differences(panel: &Panel, config: &SolverConfig) -> Result<RawSolution> {
    let k = panel.covariate_count();
    let n_f = panel.n_firms();
    let y = panel.log_wages();
    let firms = panel.firms();
    let mut rows = Vec::new();
    for w in 0..panel.n_workers() {
        let range = panel.worker_range(w);
        for o in range.start + 1..range.end {
            rows.push(DiffRow { dy: y[o] - y[o - 1], from: firms[o - 1], to: firms[o], obs: o, prev: o - 1 });
        }
    }
    if rows.is_empty() {
        return Err(Error::NoDifferences);
    }
    let mut uf = UnionFind::new(n_f);
    for r in &rows {
        uf.union(r.from, r.to);
    }
    let components = (0..n_f).filter(|&f| uf.find(f) == f).count();
    if components > 1 {
        return Err(Error::Disconnected { components });
    }
    let m = n_f - 1 + k;
    let dx = |r: &DiffRow, c: usize| panel.covariates(r.obs)[c] - panel.covariates(r.prev)[c];
    let row_dot = |r: &DiffRow, v: &[f64]| {
        let mut s = 0.0;
        if r.from != r.to {
            if r.to > 0 {
                s += v[r.to - 1];
            }
            if r.from > 0 {
                s -= v[r.from - 1];
            }
        }
        for c in 0..k {
            s += dx(r, c) * v[n_f - 1 + c];
        }
        s
    };
    let add_row = |r: &DiffRow, scale: f64, out: &mut [f64]| {
        if r.from != r.to {
            if r.to > 0 {
                out[r.to - 1] += scale;
            }
            if r.from > 0 {
                out[r.from - 1] -= scale;
            }
        }
        for c in 0..k {
            out[n_f - 1 + c] += scale * dx(r, c);
        }
    };
    let mut rhs = vec![0.0; m];
    let mut diag = vec![0.0; m];
    for r in &rows {
        add_row(r, r.dy, &mut rhs);
        if r.from != r.to {
            if r.to > 0 {
                diag[r.to - 1] += 1.0;
            }
            if r.from > 0 {
                diag[r.from - 1] += 1.0;
            }
        }
        for c in 0..k {
            diag[n_f - 1 + c] += dx(r, c).powi(2);
        }
    }
    if let Some(c) = (0..k).find(|&c| diag[n_f - 1 + c] == 0.0) {
        return Err(Error::Collinear { column: c });
    }
    let out = pcg(
        |v, out| {
            out.iter_mut().for_each(|x| *x = 0.0);
            for r in &rows {
                add_row(r, row_dot(r, v), out);
            }
        },
        &diag,
        &rhs,
        None,
        config.tol,
        config.max_iter,
    );
    if !out.converged {
        return Err(Error::NonConvergence {
            method: "first_differences",
            iterations: out.iterations,
            tolerance: out.relative_residual,
        });
    }
    let mut psi = vec![0.0];
    psi.extend_from_slice(&out.x[..n_f - 1]);
    let beta = out.x[n_f - 1..].to_vec();
    let mut alpha = vec![0.0; panel.n_workers()];
    for w in 0..panel.n_workers() {
        let range = panel.worker_range(w);
        let len = range.len() as f64;
        alpha[w] = range
            .map(|o| y[o] - psi[firms[o]] - panel.covariates(o).iter().zip(&beta).map(|(x, b)| x * b).sum::<f64>())
            .sum::<f64>()
            / len;
    }
    Ok(RawSolution {
        alpha,
        psi,
        beta,
        convergence: Convergence {
            method: Method::FirstDifferences,
            iterations: out.iterations,
            final_tolerance: out.relative_residual,
            rss_path: Vec::new(),
        },
    })
}
