//! Independent oracles for integration and acceptance tests. Nothing here
//! calls into the library's solvers or graph routines.

#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use akm_core::{Panel, PanelBuilder};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Full dense design `[D F X]`.
pub fn dense_design(panel: &Panel) -> DMatrix<f64> {
    let (nw, nf, k) = (panel.n_workers(), panel.n_firms(), panel.covariate_count());
    let mut z = DMatrix::zeros(panel.n_obs(), nw + nf + k);
    for o in 0..panel.n_obs() {
        z[(o, panel.workers()[o])] = 1.0;
        z[(o, nw + panel.firms()[o])] = 1.0;
        for (c, &x) in panel.covariates(o).iter().enumerate() {
            z[(o, nw + nf + c)] = x;
        }
    }
    z
}

pub struct DenseFit {
    pub alpha: Vec<f64>,
    pub psi: Vec<f64>,
    pub beta: Vec<f64>,
    /// Moore-Penrose inverse of `Z'Z`.
    pub ginv: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

/// Least squares on the full-rank design with firm 0's column dropped,
/// solved by QR, then shifted to mean-zero firm effects. `ginv` embeds
/// `(Z~'Z~)^-1` with a zero row and column for firm 0.
pub fn dense_fit(panel: &Panel) -> DenseFit {
    let z = dense_design(panel);
    let (nw, nf, k) = (panel.n_workers(), panel.n_firms(), panel.covariate_count());
    let grounded = z.clone().remove_column(nw);
    let qr = grounded.clone().qr();
    let y = DVector::from_column_slice(panel.log_wages());
    let qty = qr.q().transpose() * y;
    let reduced = qr.r().solve_upper_triangular(&qty).expect("full-rank grounded design");
    let r_inv = qr.r().solve_upper_triangular(&DMatrix::identity(grounded.ncols(), grounded.ncols())).unwrap();
    let inner = &r_inv * r_inv.transpose();
    let p = nw + nf + k;
    let embed = |i: usize| {
        if i < nw {
            Some(i)
        } else if i == nw {
            None
        } else {
            Some(i - 1)
        }
    };
    let ginv = DMatrix::from_fn(p, p, |a, b| match (embed(a), embed(b)) {
        (Some(a), Some(b)) => inner[(a, b)],
        _ => 0.0,
    });
    let mut theta = DVector::zeros(p);
    for i in 0..p {
        if let Some(r) = embed(i) {
            theta[i] = reduced[r];
        }
    }
    let shift = theta.rows(nw, nf).sum() / nf as f64;
    DenseFit {
        alpha: (0..nw).map(|i| theta[i] + shift).collect(),
        psi: (0..nf).map(|j| theta[nw + j] - shift).collect(),
        beta: theta.rows(nw + nf, k).iter().copied().collect(),
        ginv,
        z,
    }
}

/// Dense `A = L' M R / n` for selectors `(c_alpha, c_psi)`.
pub fn dense_form(panel: &Panel, left: (f64, f64), right: (f64, f64)) -> DMatrix<f64> {
    let n = panel.n_obs();
    let p = panel.n_workers() + panel.n_firms() + panel.covariate_count();
    let sel = |c: (f64, f64)| {
        let mut s = DMatrix::<f64>::zeros(n, p);
        for o in 0..n {
            s[(o, panel.workers()[o])] += c.0;
            s[(o, panel.n_workers() + panel.firms()[o])] += c.1;
        }
        s
    };
    let m = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    sel(left).transpose() * m * sel(right) / n as f64
}

/// Leverages `diag(Z G Z')` and component weights `diag(Z G A G Z')`.
pub fn dense_leverages(fit: &DenseFit, a: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let zg = &fit.z * &fit.ginv;
    let p = &zg * fit.z.transpose();
    let b = &zg * a * zg.transpose();
    ((0..p.nrows()).map(|o| p[(o, o)]).collect(), (0..b.nrows()).map(|o| b[(o, o)]).collect())
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Random panel with assorted stayers and movers, not necessarily connected.
pub fn random_mover_panel(seed: u64, max_firms: usize, max_workers: usize, max_spells: usize) -> Panel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_firms = rng.random_range(1..=max_firms);
    let n_workers = rng.random_range(1..=max_workers);
    let mut b = PanelBuilder::new(vec![]);
    for w in 0..n_workers {
        let spells = rng.random_range(1..=max_spells);
        let mut t = 0;
        for _ in 0..spells {
            let f = rng.random_range(0..n_firms);
            for _ in 0..rng.random_range(1..=2) {
                t += 1;
                b.push(&w.to_string(), &f.to_string(), t, rng.random::<f64>(), &[]);
            }
        }
    }
    b.build().unwrap()
}

/// Firm adjacency components over active workers and firms, by BFS.
fn components(panel: &Panel, worker_on: &[bool], firm_on: &[bool]) -> Vec<(Vec<usize>, Vec<usize>, usize)> {
    let nf = panel.n_firms();
    let mut firms_of: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); panel.n_workers()];
    let mut workers_at: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nf];
    let mut obs_of = vec![0usize; panel.n_workers()];
    for o in 0..panel.n_obs() {
        let (w, f) = (panel.workers()[o], panel.firms()[o]);
        if worker_on[w] && firm_on[f] {
            firms_of[w].insert(f);
            workers_at[f].insert(w);
            obs_of[w] += 1;
        }
    }
    let mut seen = vec![false; nf];
    let mut out = Vec::new();
    for start in 0..nf {
        if seen[start] || !firm_on[start] {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut firms = Vec::new();
        let mut workers = BTreeSet::new();
        while let Some(f) = queue.pop_front() {
            firms.push(f);
            for &w in &workers_at[f] {
                workers.insert(w);
                for &g in &firms_of[w] {
                    if !seen[g] {
                        seen[g] = true;
                        queue.push_back(g);
                    }
                }
            }
        }
        firms.sort_unstable();
        let obs = workers.iter().map(|&w| obs_of[w]).sum();
        out.push((firms, workers.into_iter().collect(), obs));
    }
    out
}

/// Component with most workers, then most observations, then smallest firm index.
fn best(comps: Vec<(Vec<usize>, Vec<usize>, usize)>) -> Option<(Vec<usize>, Vec<usize>)> {
    comps
        .into_iter()
        .filter(|c| !c.1.is_empty())
        .min_by(|a, b| b.1.len().cmp(&a.1.len()).then(b.2.cmp(&a.2)).then(a.0[0].cmp(&b.0[0])))
        .map(|(f, w, _)| (f, w))
}

/// Largest connected set as (sorted firms, sorted workers).
pub fn bfs_largest_set(panel: &Panel) -> (Vec<usize>, Vec<usize>) {
    let on_w = vec![true; panel.n_workers()];
    let on_f = vec![true; panel.n_firms()];
    best(components(panel, &on_w, &on_f)).expect("nonempty panel")
}

/// Leave-one-out set by deleting each worker in turn and checking
/// connectivity; `None` when nothing survives.
pub fn brute_leave_one_out(panel: &Panel) -> Option<(Vec<usize>, Vec<usize>)> {
    let (nw, nf) = (panel.n_workers(), panel.n_firms());
    let (firms, workers) = bfs_largest_set(panel);
    let mut w_on = vec![false; nw];
    workers.iter().for_each(|&w| w_on[w] = true);
    let mut f_on = vec![false; nf];
    firms.iter().for_each(|&f| f_on[f] = true);
    loop {
        let mut obs = vec![0usize; nw];
        for o in 0..panel.n_obs() {
            if f_on[panel.firms()[o]] {
                obs[panel.workers()[o]] += 1;
            }
        }
        for w in 0..nw {
            if obs[w] < 2 {
                w_on[w] = false;
            }
        }
        let (firms, workers) = best(components(panel, &w_on, &f_on))?;
        w_on = vec![false; nw];
        workers.iter().for_each(|&w| w_on[w] = true);
        f_on = vec![false; nf];
        firms.iter().for_each(|&f| f_on[f] = true);
        let cuts: Vec<usize> = workers
            .iter()
            .copied()
            .filter(|&w| {
                let mut without = w_on.clone();
                without[w] = false;
                components(panel, &without, &f_on).len() > 1
            })
            .collect();
        if cuts.is_empty() {
            return Some((firms, workers));
        }
        for w in cuts {
            w_on[w] = false;
        }
    }
}
