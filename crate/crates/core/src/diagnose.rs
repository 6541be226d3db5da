//! Sub-sampling plots and mover event studies.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decompose::decompose_variance;
use crate::error::{Error, Result};
use crate::network::{build_graph, largest_connected_set, movers_per_firm};
use crate::panel::{external_id_order, Panel};
use crate::solver::{estimate_panel, Estimates, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubsampleConfig {
    /// Shares of workers kept; strictly increasing, in (0, 1].
    pub shares: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Default for SubsampleConfig {
    fn default() -> Self {
        SubsampleConfig { shares: vec![0.1, 0.2, 0.5, 1.0], replicates: 10, seed: 0, solver: SolverConfig::default() }
    }
}

impl SubsampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shares.is_empty() || self.replicates == 0 {
            return Err(Error::InvalidConfig("subsampling needs at least one share and one replicate".into()));
        }
        if self.shares.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
            return Err(Error::InvalidConfig("subsample shares must lie in (0, 1]".into()));
        }
        if self.shares.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("subsample shares must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// One (share, replicate) re-estimation. Statistics are absent when the
/// subsample could not be estimated; `error` then says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsamplePoint {
    pub share_kept: f64,
    pub replicate: usize,
    /// Seed of this replicate's worker permutation.
    pub seed: u64,
    pub n_workers: usize,
    pub n_firms: usize,
    pub n_obs: usize,
    pub avg_movers_per_firm: Option<f64>,
    pub corr_alpha_psi: Option<f64>,
    pub var_psi: Option<f64>,
    pub cov2: Option<f64>,
    pub error: Option<String>,
}

impl SubsamplePoint {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

/// Seed of replicate `r`, derived from the top-level seed.
pub fn replicate_seed(seed: u64, replicate: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng.next_u64()
}

/// Re-estimates on nested random subsets of workers. Each replicate draws one
/// worker permutation; share `s` keeps its first `ceil(s * N)` workers, and the
/// largest connected set of that subsample is re-extracted.
pub fn subsample_plot(panel: &Panel, config: &SubsampleConfig) -> Result<Vec<SubsamplePoint>> {
    config.validate()?;
    config.solver.validate()?;
    let n = panel.n_workers();
    let jobs: Vec<(usize, usize)> =
        (0..config.replicates).flat_map(|r| (0..config.shares.len()).map(move |s| (r, s))).collect();
    let perms: Vec<(u64, Vec<usize>)> = (0..config.replicates)
        .map(|r| {
            let seed = replicate_seed(config.seed, r);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            (seed, perm)
        })
        .collect();
    let all_firms: Vec<usize> = (0..panel.n_firms()).collect();
    Ok(jobs
        .into_par_iter()
        .map(|(r, s)| {
            let share = config.shares[s];
            let (seed, perm) = &perms[r];
            let keep = ((share * n as f64).ceil() as usize).clamp(1, n);
            let mut point = SubsamplePoint {
                share_kept: share,
                replicate: r,
                seed: *seed,
                n_workers: 0,
                n_firms: 0,
                n_obs: 0,
                avg_movers_per_firm: None,
                corr_alpha_psi: None,
                var_psi: None,
                cov2: None,
                error: None,
            };
            let fitted = (|| -> Result<()> {
                let sub = panel.restrict(&perm[..keep], &all_firms)?;
                let connected = largest_connected_set(&build_graph(&sub)).restrict(&sub)?;
                point.n_workers = connected.n_workers();
                point.n_firms = connected.n_firms();
                point.n_obs = connected.n_obs();
                point.avg_movers_per_firm = Some(movers_per_firm(&build_graph(&connected)));
                let est = estimate_panel(&connected, &config.solver)?;
                let d = decompose_variance(&connected, &est, false)?;
                point.corr_alpha_psi = d.corr_alpha_psi;
                point.var_psi = Some(d.var_psi());
                point.cov2 = Some(d.cov2());
                Ok(())
            })();
            if let Err(e) = fitted {
                point.error = Some(format!("{}: {e}", e.code()));
            }
            point
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirmRanking {
    /// Estimated firm effects (uses the outcome being studied).
    EstimatedPsi,
    /// Firm mean log wage.
    FirmMeanWage,
}

/// Event times of the window, in order.
pub const EVENT_TIMES: [i64; 4] = [-2, -1, 1, 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventCell {
    /// Origin and destination bins, 1-based (1 = lowest).
    pub origin: usize,
    pub destination: usize,
    pub count: usize,
    /// Mean log wage at each of `EVENT_TIMES`.
    pub mean_wage: [f64; 4],
}

impl EventCell {
    /// Mean wage change across the move, `t = +1` minus `t = -1`.
    pub fn change(&self) -> f64 {
        self.mean_wage[2] - self.mean_wage[1]
    }

    /// Change before the move, `t = -1` minus `t = -2`.
    pub fn pre_trend(&self) -> f64 {
        self.mean_wage[1] - self.mean_wage[0]
    }

    /// Change after the move, `t = +2` minus `t = +1`.
    pub fn post_trend(&self) -> f64 {
        self.mean_wage[3] - self.mean_wage[2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStudyTable {
    pub ranking: FirmRanking,
    pub bins: usize,
    pub n_events: usize,
    /// Nonempty cells ordered by (origin, destination).
    pub cells: Vec<EventCell>,
    /// True when firms were ranked by effects estimated on the same wages.
    pub circular_ranking: bool,
}

impl EventStudyTable {
    pub fn cell(&self, origin: usize, destination: usize) -> Option<&EventCell> {
        self.cells.iter().find(|c| c.origin == origin && c.destination == destination)
    }
}

/// Person-year weighted bins (0-based): firms sorted by value, ties by
/// external id; a firm lands in the bin containing its employment midpoint.
pub fn firm_bins(panel: &Panel, values: &[f64], bins: usize) -> Vec<usize> {
    let sizes = panel.firm_sizes();
    let total = panel.n_obs() as f64;
    let mut order: Vec<usize> = (0..panel.n_firms()).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .unwrap_or(Ordering::Equal)
            .then_with(|| external_id_order(panel.firm_id(a), panel.firm_id(b)))
    });
    let mut out = vec![0; panel.n_firms()];
    let mut before = 0.0;
    for f in order {
        let mid = before + sizes[f] as f64 / 2.0;
        out[f] = ((bins as f64 * mid / total).floor() as usize).min(bins - 1);
        before += sizes[f] as f64;
    }
    out
}

/// Mean wage paths of movers with two consecutive periods at the origin
/// immediately followed by two consecutive periods at the destination.
pub fn event_study(
    panel: &Panel,
    estimates: Option<&Estimates>,
    ranking: FirmRanking,
    bins: usize,
) -> Result<EventStudyTable> {
    if bins == 0 {
        return Err(Error::InvalidConfig("event study needs at least one bin".into()));
    }
    let y = panel.log_wages();
    let values: Vec<f64> = match ranking {
        FirmRanking::EstimatedPsi => {
            let est = estimates
                .ok_or_else(|| Error::InvalidConfig("ranking by estimated firm effects needs estimates".into()))?;
            est.check_panel(panel)?;
            est.psi.clone()
        }
        FirmRanking::FirmMeanWage => {
            let mut sums = vec![0.0; panel.n_firms()];
            for (&f, &w) in panel.firms().iter().zip(y) {
                sums[f] += w;
            }
            sums.iter().zip(panel.firm_sizes()).map(|(s, c)| s / c as f64).collect()
        }
    };
    let bin = firm_bins(panel, &values, bins);
    let firms = panel.firms();
    let periods = panel.periods();
    let mut cells: BTreeMap<(usize, usize), (usize, [f64; 4])> = BTreeMap::new();
    let mut n_events = 0;
    for w in 0..panel.n_workers() {
        let range = panel.worker_range(w);
        if range.len() < 4 {
            continue;
        }
        for o in range.start + 2..range.end - 1 {
            let window = [o - 2, o - 1, o, o + 1];
            let (from, to) = (firms[o - 1], firms[o]);
            let consecutive = window.windows(2).all(|p| periods[p[1]] == periods[p[0]] + 1);
            if from != to && firms[o - 2] == from && firms[o + 1] == to && consecutive {
                let cell = cells.entry((bin[from] + 1, bin[to] + 1)).or_insert((0, [0.0; 4]));
                cell.0 += 1;
                for (acc, &obs) in cell.1.iter_mut().zip(&window) {
                    *acc += y[obs];
                }
                n_events += 1;
            }
        }
    }
    if n_events == 0 {
        return Err(Error::NoQualifyingMovers);
    }
    let cells = cells
        .into_iter()
        .map(|((origin, destination), (count, sums))| EventCell {
            origin,
            destination,
            count,
            mean_wage: sums.map(|s| s / count as f64),
        })
        .collect();
    Ok(EventStudyTable { ranking, bins, n_events, cells, circular_ranking: ranking == FirmRanking::EstimatedPsi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::panel::PanelBuilder;

    #[test]
    fn full_share_reproduces_full_sample() {
        let panel = fixtures::random_connected_panel(12, 60, 8, 0);
        let config = SubsampleConfig { shares: vec![1.0], replicates: 1, ..Default::default() };
        let points = subsample_plot(&panel, &config).unwrap();
        let est = estimate_panel(&panel, &config.solver).unwrap();
        let d = decompose_variance(&panel, &est, false).unwrap();
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].var_psi, Some(d.var_psi()));
        assert_eq!(points[0].cov2, Some(d.cov2()));
        assert_eq!(points[0].n_obs, panel.n_obs());
    }

    #[test]
    fn subsampling_is_reproducible_and_records_failures() {
        let panel = fixtures::random_connected_panel(13, 60, 8, 0);
        let config = SubsampleConfig { shares: vec![0.02, 0.5, 1.0], replicates: 3, seed: 9, ..Default::default() };
        let a = subsample_plot(&panel, &config).unwrap();
        assert_eq!(a, subsample_plot(&panel, &config).unwrap());
        assert_eq!(a.len(), 9);
        // Two workers rarely connect anything estimable beyond trivia, but never panic.
        assert!(a.iter().all(|p| p.succeeded() || p.error.is_some()));
        let bad = SubsampleConfig { shares: vec![0.5, 0.2], ..Default::default() };
        assert!(matches!(subsample_plot(&panel, &bad), Err(Error::InvalidConfig(_))));
    }

    fn mover_panel() -> Panel {
        // Four firms with effects 0, 1, 2, 3; additive noiseless wages.
        let mut b = PanelBuilder::new(vec![]);
        let moves = [("a", 0, 3, 0.5), ("b", 3, 0, 0.2), ("c", 1, 2, 0.0), ("d", 2, 1, 0.1)];
        for (w, from, to, alpha) in moves {
            for t in 1..=4 {
                let f = if t <= 2 { from } else { to };
                b.push(w, &f.to_string(), t, alpha + f as f64, &[]);
            }
        }
        b.build().unwrap()
    }

    #[test]
    fn noiseless_symmetry_and_flat_paths() {
        let panel = mover_panel();
        let table = event_study(&panel, None, FirmRanking::FirmMeanWage, 4).unwrap();
        assert_eq!(table.n_events, 4);
        assert_eq!(table.cells.iter().map(|c| c.count).sum::<usize>(), table.n_events);
        let up = table.cell(1, 4).unwrap().change();
        let down = table.cell(4, 1).unwrap().change();
        assert!((up + down).abs() < 1e-12);
        assert!((up - 3.0).abs() < 1e-12);
        for c in &table.cells {
            assert!(c.pre_trend().abs() < 1e-12 && c.post_trend().abs() < 1e-12);
        }
    }

    #[test]
    fn gaps_disqualify_moves() {
        let mut b = PanelBuilder::new(vec![]);
        for (t, f) in [(1, "1"), (2, "1"), (4, "2"), (5, "2")] {
            b.push("a", f, t, 0.0, &[]);
        }
        let panel = b.build().unwrap();
        assert!(matches!(event_study(&panel, None, FirmRanking::FirmMeanWage, 4), Err(Error::NoQualifyingMovers)));
    }

    #[test]
    fn bins_are_person_year_weighted() {
        let panel = mover_panel();
        let values = [0.0, 1.0, 2.0, 3.0];
        let idx: Vec<f64> = (0..4).map(|f| values[panel.firm_id(f).parse::<usize>().unwrap()]).collect();
        let bins = firm_bins(&panel, &idx, 4);
        for f in 0..4 {
            assert_eq!(bins[f], panel.firm_id(f).parse::<usize>().unwrap());
        }
        let shifted: Vec<f64> = idx.iter().map(|v| v + 10.0).collect();
        assert_eq!(firm_bins(&panel, &shifted, 4), bins);
    }
}
