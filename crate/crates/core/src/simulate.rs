//! Synthetic linked employer-employee panels with known effects.
//!
//! Generation order: effects, firm capacities, initial sorted assignment,
//! moves, then noise (shock-driven mobility draws standardized noise first so
//! that moves can react to it). Workers are observed in every period.
//! External ids are the decimal worker and firm indices.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::decompose::{covariance, Component, Decomposition, Flavor};
use crate::error::{Error, Result};
use crate::network::ConnectedSet;
use crate::panel::{Panel, PanelBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkShape {
    /// Equal firm capacities, destinations drawn uniformly.
    UniformRandom,
    /// Pareto capacities with this tail index; destinations drawn by size.
    SizeSkewed { tail: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    Homoskedastic {
        sigma2: f64,
    },
    /// Per-firm variance log-uniform in `[min, max]`. With `size_ordered`,
    /// the drawn variances are assigned so that smaller firms are noisier.
    Heteroskedastic {
        min: f64,
        max: f64,
        size_ordered: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mobility {
    /// Movers relocate once at a uniform period, independently of noise.
    Exogenous,
    /// A mover candidate relocates in the period after its first standardized
    /// shock below `threshold`, to a higher-effect firm with probability `p_up`.
    ShockDriven { threshold: f64, p_up: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_workers: usize,
    pub n_firms: usize,
    pub n_periods: usize,
    pub var_alpha_true: f64,
    pub var_psi_true: f64,
    /// Target correlation of worker effects with the initial firm's effect.
    pub corr_sorting: f64,
    pub movers_share: f64,
    pub network: NetworkShape,
    pub noise: NoiseModel,
    pub mobility: Mobility,
    /// Covariate coefficients; covariates are independent standard normals.
    pub beta: Vec<f64>,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_workers: 3_000,
            n_firms: 300,
            n_periods: 6,
            var_alpha_true: 0.1,
            var_psi_true: 0.02,
            corr_sorting: 0.2,
            movers_share: 0.25,
            network: NetworkShape::UniformRandom,
            noise: NoiseModel::Homoskedastic { sigma2: 0.05 },
            mobility: Mobility::Exogenous,
            beta: Vec::new(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InfeasibleSimulation(msg));
        if self.n_workers == 0 || self.n_firms == 0 || self.n_periods == 0 {
            return bad("n_workers, n_firms and n_periods must be positive".into());
        }
        if self.n_firms > self.n_workers {
            return bad(format!("{} firms cannot all be staffed by {} workers", self.n_firms, self.n_workers));
        }
        if !(self.var_alpha_true >= 0.0 && self.var_psi_true >= 0.0) {
            return bad("true variances must be non-negative".into());
        }
        if !(-1.0..=1.0).contains(&self.corr_sorting) {
            return bad(format!("corr_sorting {} outside [-1, 1]", self.corr_sorting));
        }
        if !(0.0..=1.0).contains(&self.movers_share) {
            return bad(format!("movers_share {} outside [0, 1]", self.movers_share));
        }
        if self.movers_share > 0.0 && self.n_firms < 2 {
            return bad("movers need at least two firms".into());
        }
        if self.movers_share > 0.0 && self.n_periods < 2 {
            return bad("movers need at least two periods".into());
        }
        match self.noise {
            NoiseModel::Homoskedastic { sigma2 } if !(sigma2 >= 0.0) => {
                return bad("sigma2 must be non-negative".into())
            }
            NoiseModel::Heteroskedastic { min, max, .. } if !(min > 0.0 && max >= min) => {
                return bad("heteroskedastic range needs 0 < min <= max".into())
            }
            _ => {}
        }
        if let NetworkShape::SizeSkewed { tail } = self.network {
            if !(tail > 0.0) {
                return bad("size_skewed tail index must be positive".into());
            }
        }
        if let Mobility::ShockDriven { threshold, p_up } = self.mobility {
            if !(0.0..=1.0).contains(&p_up) || !threshold.is_finite() {
                return bad("shock_driven needs a finite threshold and p_up in [0, 1]".into());
            }
            if self.movers_share > 0.0 && self.n_periods < 4 {
                return bad("shock_driven mobility needs at least four periods".into());
            }
        }
        Ok(())
    }
}

/// Effects and draws behind a simulated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub alpha: Vec<f64>,
    pub psi: Vec<f64>,
    pub beta: Vec<f64>,
    /// Noise variance per firm.
    pub sigma2_firm: Vec<f64>,
    /// Firm index per worker and period (row-major, `n_periods` per worker).
    pub matches: Vec<usize>,
    /// Realized noise per worker and period, same layout as `matches`.
    pub noise: Vec<f64>,
    pub n_periods: usize,
    /// Workers that changed firm.
    pub movers: usize,
}

/// JSON summary of a simulated truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub n_workers: usize,
    pub n_firms: usize,
    pub n_obs: usize,
    pub movers: usize,
    pub corr_alpha_psi_initial: f64,
    pub components: Decomposition,
}

impl SimTruth {
    /// Population components over every realized person-year.
    pub fn components(&self) -> Decomposition {
        self.components_on(|_, _| true)
    }

    fn components_on<F: Fn(usize, usize) -> bool>(&self, keep: F) -> Decomposition {
        let t = self.n_periods;
        let mut a = Vec::new();
        let mut p = Vec::new();
        let mut e = Vec::new();
        for (slot, &f) in self.matches.iter().enumerate() {
            let w = slot / t;
            if keep(w, f) {
                a.push(self.alpha[w]);
                p.push(self.psi[f]);
                e.push(self.noise[slot]);
            }
        }
        let mut components = BTreeMap::new();
        components.insert(Component::VarAlpha, covariance(&a, &a));
        components.insert(Component::VarPsi, covariance(&p, &p));
        components.insert(Component::Cov2, 2.0 * covariance(&a, &p));
        components.insert(Component::VarResid, covariance(&e, &e));
        Decomposition::from_components(components, None, Flavor::GroundTruth)
    }

    pub fn summary(&self) -> SimSummary {
        let t = self.n_periods;
        let a: Vec<f64> = (0..self.alpha.len()).map(|w| self.alpha[w]).collect();
        let p: Vec<f64> = (0..self.alpha.len()).map(|w| self.psi[self.matches[w * t]]).collect();
        SimSummary {
            n_workers: self.alpha.len(),
            n_firms: self.psi.len(),
            n_obs: self.matches.len(),
            movers: self.movers,
            corr_alpha_psi_initial: covariance(&a, &p) / (covariance(&a, &a) * covariance(&p, &p)).sqrt(),
            components: self.components(),
        }
    }
}

/// Ground-truth decomposition over the observations of `set`, a connected
/// set computed on `panel` (a simulated panel or a restriction of one).
pub fn truth_components(truth: &SimTruth, panel: &Panel, set: &ConnectedSet) -> Result<Decomposition> {
    let parse = |kind: &'static str, id: &str, len: usize| -> Result<usize> {
        id.parse::<usize>().ok().filter(|&i| i < len).ok_or_else(|| Error::UnknownEntity { kind, id: id.to_string() })
    };
    let mut worker_on = vec![false; truth.alpha.len()];
    for &w in &set.workers {
        worker_on[parse("worker", panel.worker_id(w), truth.alpha.len())?] = true;
    }
    let mut firm_on = vec![false; truth.psi.len()];
    for &f in &set.firms {
        firm_on[parse("firm", panel.firm_id(f), truth.psi.len())?] = true;
    }
    Ok(truth.components_on(|w, f| worker_on[w] && firm_on[f]))
}

/// Capacities summing to `n_workers`, each at least one.
fn capacities(config: &SimConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let (n, j) = (config.n_workers, config.n_firms);
    let weights: Vec<f64> = match config.network {
        NetworkShape::UniformRandom => vec![1.0; j],
        NetworkShape::SizeSkewed { tail } => (0..j).map(|_| (1.0 - rng.random::<f64>()).powf(-1.0 / tail)).collect(),
    };
    let total: f64 = weights.iter().sum();
    let spare = (n - j) as f64;
    let exact: Vec<f64> = weights.iter().map(|w| spare * w / total).collect();
    let mut caps: Vec<usize> = exact.iter().map(|x| 1 + x.floor() as usize).collect();
    let mut remaining = n - caps.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..j).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &f in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        caps[f] += 1;
        remaining -= 1;
    }
    caps
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Correlation between `len` evenly spaced standard normal quantiles and the
/// sorted `values`; the attenuation of rank matching onto a discrete target.
fn quantile_attenuation(sorted: &[f64]) -> f64 {
    let len = sorted.len();
    let q: Vec<f64> = (0..len).map(|r| inverse_normal_cdf((r as f64 + 0.5) / len as f64)).collect();
    let c = covariance(&q, sorted);
    let v = covariance(&q, &q) * covariance(sorted, sorted);
    if v > 0.0 {
        c / v.sqrt()
    } else {
        0.0
    }
}

fn inverse_normal_cdf(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(p)
}

/// Draws a panel and its truth from `config`. Deterministic in `config.seed`.
pub fn simulate_panel(config: &SimConfig) -> Result<(Panel, SimTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (n, j, t) = (config.n_workers, config.n_firms, config.n_periods);
    let sd_alpha = config.var_alpha_true.sqrt();
    let sd_psi = config.var_psi_true.sqrt();
    let alpha: Vec<f64> = (0..n).map(|_| sd_alpha * normal(&mut rng)).collect();
    let psi: Vec<f64> = (0..j).map(|_| sd_psi * normal(&mut rng)).collect();
    let caps = capacities(config, &mut rng);

    // Initial assignment: rank-match a correlated Gaussian index onto
    // capacity slots ordered by firm effect.
    let mut slots: Vec<usize> = caps.iter().enumerate().flat_map(|(f, &c)| std::iter::repeat_n(f, c)).collect();
    slots.sort_by(|&a, &b| psi[a].total_cmp(&psi[b]).then(a.cmp(&b)));
    let slot_psi: Vec<f64> = slots.iter().map(|&f| psi[f]).collect();
    let kappa = quantile_attenuation(&slot_psi);
    let rho = if kappa > 0.0 && sd_alpha > 0.0 { (config.corr_sorting / kappa).clamp(-1.0, 1.0) } else { 0.0 };
    let latent: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            let z = if sd_alpha > 0.0 { a / sd_alpha } else { 0.0 };
            rho * z + (1.0 - rho * rho).sqrt() * normal(&mut rng)
        })
        .collect();
    let mut by_latent: Vec<usize> = (0..n).collect();
    by_latent.sort_by(|&a, &b| latent[a].total_cmp(&latent[b]).then(a.cmp(&b)));
    let mut origin = vec![0usize; n];
    for (rank, &w) in by_latent.iter().enumerate() {
        origin[w] = slots[rank];
    }

    let sigma2_firm = firm_variances(config, &caps, &mut rng);
    let destination_weights = match config.network {
        NetworkShape::UniformRandom => None,
        NetworkShape::SizeSkewed { .. } => Some(WeightedIndex::new(&caps).expect("capacities are positive")),
    };
    let n_movers = (config.movers_share * n as f64).round() as usize;
    let mut candidates: Vec<usize> = sample(&mut rng, n, n_movers).into_vec();
    candidates.sort_unstable();

    let mut matches: Vec<usize> = origin.iter().flat_map(|&f| std::iter::repeat_n(f, t)).collect();
    let mut movers = 0;
    let standardized: Vec<f64> = match config.mobility {
        Mobility::Exogenous => {
            for &w in &candidates {
                let at = rng.random_range(1..t);
                let dest = draw_other(&mut rng, origin[w], j, destination_weights.as_ref());
                matches[w * t + at..(w + 1) * t].iter_mut().for_each(|m| *m = dest);
                movers += 1;
            }
            (0..n * t).map(|_| normal(&mut rng)).collect()
        }
        Mobility::ShockDriven { threshold, p_up } => {
            let u: Vec<f64> = (0..n * t).map(|_| normal(&mut rng)).collect();
            for &w in &candidates {
                // Shock in period index s (0-based), move from s + 1 on.
                let Some(s) = (0..t - 3).find(|&s| u[w * t + s] < threshold) else { continue };
                let up = rng.random::<f64>() < p_up;
                let from = psi[origin[w]];
                let pool: Vec<usize> = (0..j).filter(|&f| if up { psi[f] > from } else { psi[f] < from }).collect();
                let dest = if pool.is_empty() {
                    draw_other(&mut rng, origin[w], j, destination_weights.as_ref())
                } else {
                    pool[rng.random_range(0..pool.len())]
                };
                matches[w * t + s + 1..(w + 1) * t].iter_mut().for_each(|m| *m = dest);
                movers += 1;
            }
            u
        }
    };
    let noise: Vec<f64> = standardized.iter().zip(&matches).map(|(u, &f)| u * sigma2_firm[f].sqrt()).collect();

    let k = config.beta.len();
    let names = (0..k).map(|c| format!("x{}", c + 1)).collect();
    let mut builder = PanelBuilder::with_capacity(names, n * t);
    let mut x = vec![0.0; k];
    for w in 0..n {
        let wid = w.to_string();
        for s in 0..t {
            let slot = w * t + s;
            let f = matches[slot];
            x.iter_mut().for_each(|v| *v = normal(&mut rng));
            let xb: f64 = x.iter().zip(&config.beta).map(|(a, b)| a * b).sum();
            builder.push(&wid, &f.to_string(), s as i64 + 1, xb + alpha[w] + psi[f] + noise[slot], &x);
        }
    }
    let panel = builder.build()?;
    let truth = SimTruth { alpha, psi, beta: config.beta.clone(), sigma2_firm, matches, noise, n_periods: t, movers };
    Ok((panel, truth))
}

fn draw_other(rng: &mut ChaCha8Rng, from: usize, j: usize, weights: Option<&WeightedIndex<usize>>) -> usize {
    loop {
        let f = match weights {
            Some(w) => w.sample(rng),
            None => rng.random_range(0..j),
        };
        if f != from {
            return f;
        }
    }
}

fn firm_variances(config: &SimConfig, caps: &[usize], rng: &mut ChaCha8Rng) -> Vec<f64> {
    match config.noise {
        NoiseModel::Homoskedastic { sigma2 } => vec![sigma2; caps.len()],
        NoiseModel::Heteroskedastic { min, max, size_ordered } => {
            let (lo, hi) = (min.ln(), max.ln());
            let mut draws: Vec<f64> = caps.iter().map(|_| (lo + (hi - lo) * rng.random::<f64>()).exp()).collect();
            if size_ordered {
                draws.sort_by(|a, b| b.total_cmp(a));
                let mut by_size: Vec<usize> = (0..caps.len()).collect();
                by_size.sort_by_key(|&f| (caps[f], f));
                let mut out = vec![0.0; caps.len()];
                for (rank, &f) in by_size.iter().enumerate() {
                    out[f] = draws[rank];
                }
                out
            } else {
                draws
            }
        }
    }
}
