//! Bias corrections for plug-in variance components.
//!
//! A plug-in component is a quadratic form `theta' A theta` in the stacked
//! parameters `theta = (alpha, psi, beta)`, with
//! `A = L' M R / n` where `L` and `R` map parameters to per-observation
//! values `c_alpha * alpha_i + c_psi * psi_j` and `M` centers. Noise in
//! `theta_hat = G Z'y` adds `sum_o B_oo sigma_o^2` in expectation, where
//! `B_oo = z_o' G A G z_o` and `G` is a reflexive generalized inverse of
//! `Z'Z`. The homoskedastic correction replaces `sigma_o^2` by `RSS / dof`
//! (and `sum_o B_oo` by `tr(A G)`); the leave-out correction uses
//! `y_o * e_o / (1 - P_oo)` with `P_oo` the leverage.
//!
//! The exact backend inverts the reduced firm/covariate system densely. The
//! stochastic backend uses Rademacher probes and conjugate-gradient solves.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decompose::{covariance, Component, Decomposition, Flavor};
use crate::design::{accumulate, CgReduced, DenseReduced, Design, ReducedSolver};
use crate::error::{Error, Result};
use crate::network::ensure_connected;
use crate::panel::Panel;
use crate::solver::Estimates;

/// Leverages at or above this value make leave-out residuals undefined.
pub const LEVERAGE_CEILING: f64 = 1.0 - 1e-10;

/// Largest reduced dimension (firms - 1 + covariates) for the exact backend.
pub const EXACT_LIMIT: usize = 4_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormKind {
    VarAlpha,
    VarPsi,
    CovAlphaPsi,
    /// `Var(alpha + psi)`, used to check polarization identities.
    VarAlphaPlusPsi,
}

/// Per-observation selector `c_alpha * alpha_i + c_psi * psi_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Selector {
    alpha: f64,
    psi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticForm {
    pub component: FormKind,
    left: Selector,
    right: Selector,
}

impl QuadraticForm {
    pub fn new(component: FormKind) -> Self {
        let (l, r) = match component {
            FormKind::VarAlpha => ((1.0, 0.0), (1.0, 0.0)),
            FormKind::VarPsi => ((0.0, 1.0), (0.0, 1.0)),
            FormKind::CovAlphaPsi => ((1.0, 0.0), (0.0, 1.0)),
            FormKind::VarAlphaPlusPsi => ((1.0, 1.0), (1.0, 1.0)),
        };
        QuadraticForm { component, left: Selector { alpha: l.0, psi: l.1 }, right: Selector { alpha: r.0, psi: r.1 } }
    }

    pub fn var_alpha() -> Self {
        Self::new(FormKind::VarAlpha)
    }

    pub fn var_psi() -> Self {
        Self::new(FormKind::VarPsi)
    }

    pub fn cov_alpha_psi() -> Self {
        Self::new(FormKind::CovAlphaPsi)
    }

    fn select(sel: Selector, panel: &Panel, alpha: &[f64], psi: &[f64]) -> Vec<f64> {
        panel.workers().iter().zip(panel.firms()).map(|(&w, &f)| sel.alpha * alpha[w] + sel.psi * psi[f]).collect()
    }

    /// `theta' A theta` (the plug-in value for fitted effects).
    pub fn evaluate(&self, panel: &Panel, alpha: &[f64], psi: &[f64]) -> f64 {
        covariance(&Self::select(self.left, panel, alpha, psi), &Self::select(self.right, panel, alpha, psi))
    }

    /// Symmetric matrix-free application `v -> A v`, returned as
    /// `(alpha, psi, beta)` blocks.
    pub fn apply(&self, panel: &Panel, alpha: &[f64], psi: &[f64], beta: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = panel.n_obs() as f64;
        let centered = |sel: Selector| {
            let v = Self::select(sel, panel, alpha, psi);
            let m = v.iter().sum::<f64>() / n;
            v.into_iter().map(|x| x - m).collect::<Vec<_>>()
        };
        let ml = centered(self.left);
        let mr = centered(self.right);
        let mut out_a = vec![0.0; alpha.len()];
        let mut out_p = vec![0.0; psi.len()];
        for o in 0..panel.n_obs() {
            let (w, f) = (panel.workers()[o], panel.firms()[o]);
            // (L'MR + R'ML) / 2n
            out_a[w] += (self.left.alpha * mr[o] + self.right.alpha * ml[o]) / (2.0 * n);
            out_p[f] += (self.left.psi * mr[o] + self.right.psi * ml[o]) / (2.0 * n);
        }
        (out_a, out_p, vec![0.0; beta.len()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StochasticConfig {
    pub probes: usize,
    pub seed: u64,
    /// CG tolerance on the relative residual.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for StochasticConfig {
    fn default() -> Self {
        StochasticConfig { probes: 100, seed: 0, tol: 1e-8, max_iter: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Backend {
    Exact,
    Stochastic(StochasticConfig),
}

impl Backend {
    pub fn stochastic(probes: usize, seed: u64) -> Self {
        Backend::Stochastic(StochasticConfig { probes, seed, ..Default::default() })
    }

    pub fn kind(&self) -> BackendKind {
        match self {
            Backend::Exact => BackendKind::Exact,
            Backend::Stochastic(_) => BackendKind::Stochastic,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Backend::Stochastic(c) = self {
            if c.probes == 0 {
                return Err(Error::InvalidConfig("stochastic backend needs at least one probe".into()));
            }
            if !(c.tol > 0.0) || c.max_iter == 0 {
                return Err(Error::InvalidConfig("stochastic backend needs positive tol and max_iter".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Exact,
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionMethod {
    HomoskedasticTrace,
    LeaveOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResult {
    pub component: FormKind,
    pub plug_in: f64,
    pub correction: f64,
    pub corrected: f64,
    pub method: CorrectionMethod,
    pub backend: BackendKind,
    pub probes: usize,
    pub seed: Option<u64>,
    /// Monte Carlo standard error of the correction (stochastic backend).
    pub mc_stderr: Option<f64>,
    /// `sum_o B_oo` or its Hutchinson estimate (homoskedastic only).
    pub trace: Option<f64>,
    /// `RSS / dof` (homoskedastic only).
    pub sigma2: Option<f64>,
    pub warnings: Vec<String>,
}

impl CorrectionResult {
    fn new(
        form: &QuadraticForm,
        plug_in: f64,
        correction: f64,
        method: CorrectionMethod,
        backend: &Backend,
        mc_stderr: Option<f64>,
    ) -> Self {
        let corrected = plug_in - correction;
        let mut warnings = Vec::new();
        if corrected < 0.0 && form.component != FormKind::CovAlphaPsi {
            warnings.push(format!("corrected variance is negative ({corrected:e}); reported without clamping"));
        }
        let (probes, seed) = match backend {
            Backend::Exact => (0, None),
            Backend::Stochastic(c) => (c.probes, Some(c.seed)),
        };
        CorrectionResult {
            component: form.component,
            plug_in,
            correction,
            corrected,
            method,
            backend: backend.kind(),
            probes,
            seed,
            mc_stderr,
            trace: None,
            sigma2: None,
            warnings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeverageTable {
    /// `P_oo` per observation.
    pub leverage: Vec<f64>,
    /// `B_oo` per observation for `component`, when requested.
    pub weights: Option<Vec<f64>>,
    pub component: Option<FormKind>,
    pub backend: BackendKind,
    pub probes: usize,
    pub seed: Option<u64>,
}

impl LeverageTable {
    pub fn sum(&self) -> f64 {
        self.leverage.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.leverage.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

struct ExactEngine<'d, 'a> {
    design: &'d Design<'a>,
    cinv: DMatrix<f64>,
}

/// Reduced rows of one worker: `h_i` and `r_o = f_o - h_i / T_i` per observation.
struct WorkerRows {
    t: f64,
    h: Vec<(usize, f64)>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl<'d, 'a> ExactEngine<'d, 'a> {
    fn new(design: &'d Design<'a>) -> Result<Self> {
        if design.m > EXACT_LIMIT {
            return Err(Error::TooLargeForDense { size: design.m });
        }
        let dense = DenseReduced::new(design)
            .ok_or_else(|| Error::TooSparse("reduced normal equations are singular".into()))?;
        Ok(ExactEngine { design, cinv: dense.inverse })
    }

    fn worker_rows(&self, w: usize) -> WorkerRows {
        let d = self.design;
        let t = d.worker_counts[w];
        let mut h = Vec::new();
        d.worker_sum(w, &mut h);
        let rows = d
            .panel
            .worker_range(w)
            .map(|o| {
                let mut r = Vec::new();
                d.sparse_row(o, &mut r);
                for &(a, v) in &h {
                    accumulate(&mut r, a, -v / t);
                }
                r
            })
            .collect();
        WorkerRows { t, h, rows }
    }

    fn sparse_quad(m: &DMatrix<f64>, r: &[(usize, f64)]) -> f64 {
        let mut s = 0.0;
        for &(a, va) in r {
            for &(b, vb) in r {
                s += va * vb * m[(a, b)];
            }
        }
        s
    }

    fn sparse_dot(dense: &DVector<f64>, r: &[(usize, f64)]) -> f64 {
        r.iter().map(|&(a, v)| v * dense[a]).sum()
    }

    /// `C^{-1} s` for sparse `s`.
    fn cinv_sparse(&self, s: &[(usize, f64)]) -> DVector<f64> {
        let mut out = DVector::zeros(self.design.m);
        for &(a, v) in s {
            out.axpy(v, &self.cinv.column(a), 1.0);
        }
        out
    }

    fn leverages(&self) -> Vec<f64> {
        let per_worker: Vec<Vec<f64>> = (0..self.design.n_workers())
            .into_par_iter()
            .map(|w| {
                let rows = self.worker_rows(w);
                rows.rows.iter().map(|r| 1.0 / rows.t + Self::sparse_quad(&self.cinv, r)).collect()
            })
            .collect();
        per_worker.concat()
    }

    fn weights(&self, form: &QuadraticForm) -> Vec<f64> {
        let d = self.design;
        let m = d.m;
        let n_psi = d.n_firms - 1;
        let n = d.n_obs() as f64;
        // e_F: reduced firm sizes; fsum: sum of all reduced rows.
        let mut e_f = DVector::zeros(m);
        for j in 1..d.n_firms {
            e_f[j - 1] = d.firm_sizes[j];
        }
        let mut fsum = DVector::zeros(m);
        let mut ee = DMatrix::<f64>::zeros(m, m);
        let mut eb = DMatrix::<f64>::zeros(m, m);
        let mut bb = DMatrix::<f64>::zeros(m, m);
        let mut h = Vec::new();
        for w in 0..d.n_workers() {
            d.worker_sum(w, &mut h);
            let t = d.worker_counts[w];
            for &(a, va) in &h {
                fsum[a] += va;
                for &(b, vb) in &h {
                    bb[(a, b)] += va * vb / t;
                    if a < n_psi {
                        eb[(a, b)] += va * vb / t;
                    }
                }
            }
        }
        for a in 0..n_psi {
            ee[(a, a)] = e_f[a];
        }
        let (l, r) = (form.left, form.right);
        let u_l = &e_f * l.psi - &fsum * l.alpha;
        let u_r = &e_f * r.psi - &fsum * r.alpha;
        let ktk = &ee * (l.psi * r.psi) - &eb * (l.psi * r.alpha) - eb.transpose() * (l.alpha * r.psi)
            + &bb * (l.alpha * r.alpha)
            - (&u_l * u_r.transpose()) / n;
        let q = &self.cinv * ktk * &self.cinv;
        let cu_l = &self.cinv * &u_l / n;
        let cu_r = &self.cinv * &u_r / n;

        let per_worker: Vec<Vec<f64>> = (0..d.n_workers())
            .into_par_iter()
            .map(|w| {
                let rows = self.worker_rows(w);
                let t = rows.t;
                let s_of = |sel: Selector| -> Vec<(usize, f64)> {
                    rows.h
                        .iter()
                        .map(|&(a, v)| (a, if a < n_psi { sel.psi * v } else { 0.0 } - sel.alpha * v))
                        .collect()
                };
                let g_l = self.cinv_sparse(&s_of(l)) / t - &cu_l;
                let g_r = self.cinv_sparse(&s_of(r)) / t - &cu_r;
                rows.rows
                    .iter()
                    .map(|ro| {
                        let term = l.alpha * r.alpha * (1.0 / t - 1.0 / n)
                            + l.alpha * Self::sparse_dot(&g_r, ro)
                            + r.alpha * Self::sparse_dot(&g_l, ro)
                            + Self::sparse_quad(&q, ro);
                        term / n
                    })
                    .collect()
            })
            .collect();
        per_worker.concat()
    }
}

struct StochasticEngine<'d, 'a> {
    design: &'d Design<'a>,
    solver: CgReduced<'d, 'a>,
    config: StochasticConfig,
}

/// Probe stream families, so that different estimators use independent draws.
const STREAM_TRACE: u64 = 1;
const STREAM_LEVERAGE: u64 = 2;
const STREAM_WEIGHTS: u64 = 3;

impl<'d, 'a> StochasticEngine<'d, 'a> {
    fn new(design: &'d Design<'a>, config: &StochasticConfig) -> Self {
        StochasticEngine { design, solver: CgReduced::new(design, config.tol, config.max_iter), config: config.clone() }
    }

    fn rng(&self, family: u64, probe: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream((family << 40) | probe as u64);
        rng
    }

    fn rademacher(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
    }

    fn ginverse(&self, ua: &[f64], up: &[f64], ub: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let d = self.design;
        let solve = self.solver.solve(&d.reduce_rhs(ua, up, ub));
        if !solve.converged {
            return Err(Error::NonConvergence {
                method: "conjugate_gradient",
                iterations: solve.iterations,
                tolerance: solve.relative_residual,
            });
        }
        let alpha = d.back_substitute(ua, &solve.v);
        let (psi, beta) = d.expand(&solve.v);
        Ok((alpha, psi, beta))
    }

    /// Per-probe values of `z' A G z` with parameter-space Rademacher `z`.
    fn trace_samples(&self, form: &QuadraticForm) -> Result<Vec<f64>> {
        let d = self.design;
        let panel = d.panel;
        (0..self.config.probes)
            .into_par_iter()
            .map(|r| {
                let mut rng = self.rng(STREAM_TRACE, r);
                let za = Self::rademacher(&mut rng, d.n_workers());
                let zp = Self::rademacher(&mut rng, d.n_firms);
                let zb = Self::rademacher(&mut rng, d.k);
                let (ga, gp, _) = self.ginverse(&za, &zp, &zb)?;
                let lz = QuadraticForm::select(form.left, panel, &za, &zp);
                let rg = QuadraticForm::select(form.right, panel, &ga, &gp);
                Ok(covariance(&lz, &rg))
            })
            .collect()
    }

    /// `Z G Z' z` for observation-space `z`.
    fn project(&self, z: &[f64]) -> Result<Vec<f64>> {
        let (ua, up, ub) = self.design.apply_zt(z);
        let (a, p, b) = self.ginverse(&ua, &up, &ub)?;
        Ok(self.design.apply_z(&a, &p, &b))
    }

    fn leverages(&self) -> Result<Vec<f64>> {
        let n = self.design.n_obs();
        let samples: Vec<Vec<f64>> = (0..self.config.probes)
            .into_par_iter()
            .map(|r| {
                let mut rng = self.rng(STREAM_LEVERAGE, r);
                let z = Self::rademacher(&mut rng, n);
                Ok(self.project(&z)?.into_iter().map(|v| v * v).collect())
            })
            .collect::<Result<_>>()?;
        Ok(average(&samples, n))
    }

    /// `Z G L' M z`.
    fn weight_side(&self, sel: Selector, mz: &[f64]) -> Result<Vec<f64>> {
        let d = self.design;
        let (ua, up, _) = d.apply_zt(mz);
        let ua: Vec<f64> = ua.into_iter().map(|v| sel.alpha * v).collect();
        let up: Vec<f64> = up.into_iter().map(|v| sel.psi * v).collect();
        let (a, p, b) = self.ginverse(&ua, &up, &vec![0.0; d.k])?;
        Ok(d.apply_z(&a, &p, &b))
    }

    /// Per-probe `B_oo` draws reduced to `sum_o b_o * coeff_o`, plus the
    /// averaged `B_oo` estimates.
    fn weight_samples(&self, form: &QuadraticForm, coeff: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.design.n_obs();
        let nf = n as f64;
        let draws: Vec<(Vec<f64>, f64)> = (0..self.config.probes)
            .into_par_iter()
            .map(|r| {
                let mut rng = self.rng(STREAM_WEIGHTS, r);
                let z = Self::rademacher(&mut rng, n);
                let mean = z.iter().sum::<f64>() / nf;
                let mz: Vec<f64> = z.iter().map(|v| v - mean).collect();
                let bl = self.weight_side(form.left, &mz)?;
                let br = if form.left == form.right { bl.clone() } else { self.weight_side(form.right, &mz)? };
                let b: Vec<f64> = bl.iter().zip(&br).map(|(x, y)| x * y / nf).collect();
                let s = b.iter().zip(coeff).map(|(x, c)| x * c).sum();
                Ok((b, s))
            })
            .collect::<Result<_>>()?;
        let sums = draws.iter().map(|(_, s)| *s).collect();
        let b: Vec<Vec<f64>> = draws.into_iter().map(|(b, _)| b).collect();
        Ok((average(&b, n), sums))
    }
}

fn average(samples: &[Vec<f64>], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for s in samples {
        for (o, v) in out.iter_mut().zip(s) {
            *o += v;
        }
    }
    let r = samples.len() as f64;
    out.iter_mut().for_each(|v| *v /= r);
    out
}

fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let r = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / r;
    if samples.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

enum Engine<'d, 'a> {
    Exact(ExactEngine<'d, 'a>),
    Stochastic(StochasticEngine<'d, 'a>),
}

/// Shared state for several corrections on one panel: the engine and
/// leverages computed at most once.
struct Corrector<'d, 'a> {
    engine: Engine<'d, 'a>,
    backend: Backend,
    estimates: &'d Estimates,
    leverages: Option<Vec<f64>>,
}

impl<'d, 'a> Corrector<'d, 'a> {
    fn new(design: &'d Design<'a>, estimates: &'d Estimates, backend: &Backend) -> Result<Self> {
        backend.validate()?;
        estimates.check_panel(design.panel)?;
        ensure_connected(design.panel)?;
        let engine = match backend {
            Backend::Exact => Engine::Exact(ExactEngine::new(design)?),
            Backend::Stochastic(c) => Engine::Stochastic(StochasticEngine::new(design, c)),
        };
        Ok(Corrector { engine, backend: backend.clone(), estimates, leverages: None })
    }

    fn panel(&self) -> &'a Panel {
        match &self.engine {
            Engine::Exact(e) => e.design.panel,
            Engine::Stochastic(e) => e.design.panel,
        }
    }

    fn plug_in(&self, form: &QuadraticForm) -> f64 {
        form.evaluate(self.panel(), &self.estimates.alpha, &self.estimates.psi)
    }

    fn leverages(&mut self) -> Result<&[f64]> {
        if self.leverages.is_none() {
            let p = match &self.engine {
                Engine::Exact(e) => e.leverages(),
                Engine::Stochastic(e) => e.leverages()?,
            };
            self.leverages = Some(p);
        }
        Ok(self.leverages.as_deref().expect("computed above"))
    }

    fn homoskedastic(&mut self, form: &QuadraticForm) -> Result<CorrectionResult> {
        let sigma2 = self.estimates.sigma2().ok_or(Error::NoDegreesOfFreedom)?;
        let (trace, trace_se) = match &self.engine {
            Engine::Exact(e) => (e.weights(form).iter().sum::<f64>(), None),
            Engine::Stochastic(e) => {
                let (m, se) = mean_and_stderr(&e.trace_samples(form)?);
                (m, Some(se))
            }
        };
        let mut out = CorrectionResult::new(
            form,
            self.plug_in(form),
            sigma2 * trace,
            CorrectionMethod::HomoskedasticTrace,
            &self.backend,
            trace_se.map(|se| sigma2 * se),
        );
        out.trace = Some(trace);
        out.sigma2 = Some(sigma2);
        Ok(out)
    }

    /// `y_o * e_o / (1 - P_oo)` per observation.
    fn observation_variances(&mut self) -> Result<Vec<f64>> {
        let y = self.panel().log_wages();
        let resid = &self.estimates.residuals;
        let p = self.leverages()?;
        if let Some((o, &l)) = p.iter().enumerate().find(|(_, &l)| !(l < LEVERAGE_CEILING)) {
            return Err(Error::LeverageOne { observation: o, leverage: l });
        }
        Ok(p.iter().enumerate().map(|(o, &l)| y[o] * resid[o] / (1.0 - l)).collect())
    }

    fn leave_out(&mut self, form: &QuadraticForm) -> Result<CorrectionResult> {
        let sigma = self.observation_variances()?;
        let (correction, se) = match &self.engine {
            Engine::Exact(e) => (e.weights(form).iter().zip(&sigma).map(|(b, s)| b * s).sum(), None),
            Engine::Stochastic(e) => {
                let (_, sums) = e.weight_samples(form, &sigma)?;
                let (m, se) = mean_and_stderr(&sums);
                (m, Some(se))
            }
        };
        Ok(CorrectionResult::new(form, self.plug_in(form), correction, CorrectionMethod::LeaveOut, &self.backend, se))
    }

    fn correct(&mut self, form: &QuadraticForm, method: CorrectionMethod) -> Result<CorrectionResult> {
        match method {
            CorrectionMethod::HomoskedasticTrace => self.homoskedastic(form),
            CorrectionMethod::LeaveOut => self.leave_out(form),
        }
    }
}

/// Homoskedastic trace correction `sigma^2 * tr(A G)` with `sigma^2 = RSS / dof`.
pub fn correct_homoskedastic(
    panel: &Panel,
    estimates: &Estimates,
    form: &QuadraticForm,
    backend: &Backend,
) -> Result<CorrectionResult> {
    let design = Design::new(panel);
    Corrector::new(&design, estimates, backend)?.homoskedastic(form)
}

/// Leave-out correction `sum_o B_oo * y_o * e_o / (1 - P_oo)`. The panel
/// should be a leave-one-out connected set.
pub fn correct_leave_out(
    panel: &Panel,
    estimates: &Estimates,
    form: &QuadraticForm,
    backend: &Backend,
) -> Result<CorrectionResult> {
    let design = Design::new(panel);
    Corrector::new(&design, estimates, backend)?.leave_out(form)
}

/// Leverages of every observation of a connected panel, optionally with the
/// component weights `B_oo` of `form`.
pub fn compute_leverages(panel: &Panel, backend: &Backend, form: Option<&QuadraticForm>) -> Result<LeverageTable> {
    backend.validate()?;
    ensure_connected(panel)?;
    let design = Design::new(panel);
    let (leverage, weights) = match backend {
        Backend::Exact => {
            let e = ExactEngine::new(&design)?;
            (e.leverages(), form.map(|f| e.weights(f)))
        }
        Backend::Stochastic(c) => {
            let e = StochasticEngine::new(&design, c);
            let weights = match form {
                Some(f) => Some(e.weight_samples(f, &vec![0.0; panel.n_obs()])?.0),
                None => None,
            };
            (e.leverages()?, weights)
        }
    };
    let (probes, seed) = match backend {
        Backend::Exact => (0, None),
        Backend::Stochastic(c) => (c.probes, Some(c.seed)),
    };
    Ok(LeverageTable { leverage, weights, component: form.map(|f| f.component), backend: backend.kind(), probes, seed })
}

/// Plug-in and corrected decompositions with the per-component corrections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectedDecomposition {
    pub plug_in: Decomposition,
    pub corrected: Decomposition,
    pub corrections: Vec<CorrectionResult>,
}

/// Corrects `var_alpha`, `var_psi` and `cov2`; the residual share absorbs the
/// difference so the components still add up to the plug-in total.
pub fn corrected_decomposition(
    panel: &Panel,
    estimates: &Estimates,
    method: CorrectionMethod,
    backend: &Backend,
) -> Result<CorrectedDecomposition> {
    let plug_in = crate::decompose::decompose_variance(panel, estimates, false)?;
    let design = Design::new(panel);
    let mut corrector = Corrector::new(&design, estimates, backend)?;
    let mut corrections = Vec::with_capacity(3);
    for kind in [FormKind::VarAlpha, FormKind::VarPsi, FormKind::CovAlphaPsi] {
        corrections.push(corrector.correct(&QuadraticForm::new(kind), method)?);
    }
    let var_alpha = corrections[0].corrected;
    let var_psi = corrections[1].corrected;
    let cov2 = 2.0 * corrections[2].corrected;
    let total = plug_in.total_variance;
    let mut components = std::collections::BTreeMap::new();
    components.insert(Component::VarAlpha, var_alpha);
    components.insert(Component::VarPsi, var_psi);
    components.insert(Component::Cov2, cov2);
    components.insert(Component::VarResid, total - var_alpha - var_psi - cov2);
    let flavor = match method {
        CorrectionMethod::HomoskedasticTrace => Flavor::HomoskedasticCorrected,
        CorrectionMethod::LeaveOut => Flavor::LeaveOutCorrected,
    };
    Ok(CorrectedDecomposition {
        plug_in,
        corrected: Decomposition::from_components(components, Some(total), flavor),
        corrections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::solver::{estimate_panel, SolverConfig};

    fn fit(panel: &Panel) -> Estimates {
        estimate_panel(panel, &SolverConfig { tol: 1e-13, ..Default::default() }).unwrap()
    }

    #[test]
    fn exact_fit_has_no_correction() {
        let panel = fixtures::exact_fit_panel();
        let est = fit(&panel);
        for kind in [FormKind::VarAlpha, FormKind::VarPsi, FormKind::CovAlphaPsi] {
            let form = QuadraticForm::new(kind);
            let h = correct_homoskedastic(&panel, &est, &form, &Backend::Exact).unwrap();
            assert!(h.correction.abs() < 1e-20, "{kind:?} {}", h.correction);
            assert_eq!(h.corrected, h.plug_in - h.correction);
        }
        let cd = corrected_decomposition(&panel, &est, CorrectionMethod::HomoskedasticTrace, &Backend::Exact).unwrap();
        for c in Component::CORE {
            assert!((cd.corrected.get(c).unwrap() - cd.plug_in.get(c).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn leverages_sum_to_rank() {
        let panel = fixtures::random_connected_panel(9, 40, 6, 2);
        let table = compute_leverages(&panel, &Backend::Exact, None).unwrap();
        let rank = (panel.n_workers() + panel.n_firms() - 1 + 2) as f64;
        assert!((table.sum() - rank).abs() < 1e-6);
        assert!(table.leverage.iter().all(|&p| (0.0..=1.0 + 1e-12).contains(&p)));
    }

    #[test]
    fn plug_in_matches_decomposition() {
        let panel = fixtures::random_connected_panel(1, 40, 6, 1);
        let est = fit(&panel);
        let d = crate::decompose::decompose_variance(&panel, &est, false).unwrap();
        assert!((QuadraticForm::var_psi().evaluate(&panel, &est.alpha, &est.psi) - d.var_psi()).abs() < 1e-14);
        let cov = QuadraticForm::cov_alpha_psi().evaluate(&panel, &est.alpha, &est.psi);
        assert!((2.0 * cov - d.cov2()).abs() < 1e-14);
    }

    #[test]
    fn quadratic_form_apply_is_consistent() {
        let panel = fixtures::random_connected_panel(2, 20, 4, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut draw = |len| (0..len).map(|_| rng.random::<f64>() - 0.5).collect::<Vec<f64>>();
        let (a, p, b) = (draw(panel.n_workers()), draw(panel.n_firms()), draw(1));
        for kind in [FormKind::VarAlpha, FormKind::VarPsi, FormKind::CovAlphaPsi] {
            let form = QuadraticForm::new(kind);
            let (ya, yp, yb) = form.apply(&panel, &a, &p, &b);
            let quad: f64 =
                ya.iter().zip(&a).chain(yp.iter().zip(&p)).chain(yb.iter().zip(&b)).map(|(x, y)| x * y).sum();
            assert!((quad - form.evaluate(&panel, &a, &p)).abs() < 1e-12);
            let zero = form.apply(&panel, &vec![0.0; a.len()], &vec![0.0; p.len()], &[0.0]);
            assert!(zero.0.iter().chain(&zero.1).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn polarization_identity() {
        let panel = fixtures::random_connected_panel(6, 60, 8, 0);
        let est = fit(&panel);
        let c =
            |kind| correct_homoskedastic(&panel, &est, &QuadraticForm::new(kind), &Backend::Exact).unwrap().correction;
        let direct = c(FormKind::CovAlphaPsi);
        let implied = (c(FormKind::VarAlphaPlusPsi) - c(FormKind::VarAlpha) - c(FormKind::VarPsi)) / 2.0;
        assert!((direct - implied).abs() < 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn stochastic_is_reproducible() {
        let panel = fixtures::random_connected_panel(8, 30, 5, 0);
        let est = fit(&panel);
        let backend = Backend::stochastic(20, 7);
        let a = correct_homoskedastic(&panel, &est, &QuadraticForm::var_psi(), &backend).unwrap();
        let b = correct_homoskedastic(&panel, &est, &QuadraticForm::var_psi(), &backend).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.seed, Some(7));
        assert!(a.mc_stderr.unwrap() > 0.0);
    }

    #[test]
    fn bridge_observation_has_unit_leverage() {
        // Worker "b" is the only link to firm 3.
        let mut builder = crate::panel::PanelBuilder::new(vec![]);
        for (w, f, t, y) in [
            ("a", "1", 1, 1.0),
            ("a", "2", 2, 1.5),
            ("c", "1", 1, 0.2),
            ("c", "2", 2, 0.4),
            ("b", "2", 1, 1.0),
            ("b", "3", 2, 2.0),
        ] {
            builder.push(w, f, t, y, &[]);
        }
        let panel = builder.build().unwrap();
        let est = fit(&panel);
        let err = correct_leave_out(&panel, &est, &QuadraticForm::var_psi(), &Backend::Exact).unwrap_err();
        assert!(matches!(err, Error::LeverageOne { .. }));
    }

    #[test]
    fn invalid_backend() {
        let panel = fixtures::exact_fit_panel();
        let est = fit(&panel);
        let err =
            correct_homoskedastic(&panel, &est, &QuadraticForm::var_psi(), &Backend::stochastic(0, 1)).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }
}
