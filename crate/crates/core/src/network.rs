//! Worker-firm mobility graph and connected-set extraction.
//!
//! Firm effects are only identified within sets of firms linked by chains of
//! job movers. The largest such set is found with a union-find over firms;
//! the leave-one-out set additionally survives the deletion of any single
//! worker, which is what observation-level leave-out corrections need.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::Panel;

/// Disjoint-set forest with path compression and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(len: usize) -> Self {
        Self { parent: (0..len).collect(), size: vec![1; len] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] { (ra, rb) } else { (rb, ra) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        true
    }
}

/// Firms as nodes, with an edge between two firms for every worker observed at both.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityGraph {
    n_firms: usize,
    /// Per worker: visited firms (ascending) with the number of observations at each.
    worker_firms: Vec<Vec<(usize, usize)>>,
    /// `(a, b)` with `a < b` mapped to the number of distinct movers between them.
    edges: BTreeMap<(usize, usize), usize>,
}

impl MobilityGraph {
    pub fn n_firms(&self) -> usize {
        self.n_firms
    }

    pub fn n_workers(&self) -> usize {
        self.worker_firms.len()
    }

    pub fn edges(&self) -> &BTreeMap<(usize, usize), usize> {
        &self.edges
    }

    pub fn mover_count(&self, a: usize, b: usize) -> usize {
        let key = if a < b { (a, b) } else { (b, a) };
        self.edges.get(&key).copied().unwrap_or(0)
    }

    /// Firms visited by `worker`, ascending.
    pub fn firms_of(&self, worker: usize) -> impl Iterator<Item = usize> + '_ {
        self.worker_firms[worker].iter().map(|&(f, _)| f)
    }

    pub fn is_mover(&self, worker: usize) -> bool {
        self.worker_firms[worker].len() >= 2
    }

    pub fn n_movers(&self) -> usize {
        self.worker_firms.iter().filter(|fs| fs.len() >= 2).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    LargestConnected,
    LeaveOneOut,
}

/// A set of firms and the workers employed only at those firms. Indices refer
/// to the panel the set was computed on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectedSet {
    pub firms: Vec<usize>,
    pub workers: Vec<usize>,
    pub kind: SetKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub n_firms_kept: usize,
    pub n_workers_kept: usize,
    pub n_obs_kept: usize,
    pub share_of_observations: f64,
}

impl ConnectedSet {
    /// Restricts `panel` to the set.
    pub fn restrict(&self, panel: &Panel) -> Result<Panel> {
        panel.restrict(&self.workers, &self.firms)
    }

    /// True when the set keeps every worker and firm of `panel`.
    pub fn covers(&self, panel: &Panel) -> bool {
        self.workers.len() == panel.n_workers() && self.firms.len() == panel.n_firms()
    }

    pub fn summary(&self, panel: &Panel) -> SetSummary {
        let mut keep_w = vec![false; panel.n_workers()];
        for &w in &self.workers {
            keep_w[w] = true;
        }
        let mut keep_f = vec![false; panel.n_firms()];
        for &f in &self.firms {
            keep_f[f] = true;
        }
        let kept = panel.observations().filter(|o| keep_w[o.worker] && keep_f[o.firm]).count();
        SetSummary {
            n_firms_kept: self.firms.len(),
            n_workers_kept: self.workers.len(),
            n_obs_kept: kept,
            share_of_observations: kept as f64 / panel.n_obs() as f64,
        }
    }
}

/// Builds the mobility graph of `panel`.
pub fn build_graph(panel: &Panel) -> MobilityGraph {
    let mut worker_firms = Vec::with_capacity(panel.n_workers());
    let mut edges = BTreeMap::new();
    let firms = panel.firms();
    for w in 0..panel.n_workers() {
        let mut visited: Vec<(usize, usize)> = Vec::new();
        for o in panel.worker_range(w) {
            match visited.iter_mut().find(|(f, _)| *f == firms[o]) {
                Some(slot) => slot.1 += 1,
                None => visited.push((firms[o], 1)),
            }
        }
        visited.sort_unstable();
        for (i, &(a, _)) in visited.iter().enumerate() {
            for &(b, _) in &visited[i + 1..] {
                *edges.entry((a, b)).or_insert(0) += 1;
            }
        }
        worker_firms.push(visited);
    }
    MobilityGraph { n_firms: panel.n_firms(), worker_firms, edges }
}

/// Ranking key for candidate components: most workers, then most
/// observations, then smallest firm index (external id order).
#[derive(Debug, Clone, Copy, Default)]
struct ComponentStats {
    workers: usize,
    obs: usize,
    min_firm: usize,
}

impl ComponentStats {
    fn better_than(&self, other: &ComponentStats) -> bool {
        (self.workers, self.obs, std::cmp::Reverse(self.min_firm))
            > (other.workers, other.obs, std::cmp::Reverse(other.min_firm))
    }
}

/// Picks the best component among workers/firms flagged active, returning masks.
fn best_component(graph: &MobilityGraph, worker_on: &[bool], firm_on: &[bool]) -> (Vec<bool>, Vec<bool>) {
    let mut uf = UnionFind::new(graph.n_firms);
    for (w, fs) in graph.worker_firms.iter().enumerate() {
        if !worker_on[w] {
            continue;
        }
        let mut active = fs.iter().filter(|(f, _)| firm_on[*f]).map(|&(f, _)| f);
        if let Some(first) = active.next() {
            for f in active {
                uf.union(first, f);
            }
        }
    }
    let mut stats: BTreeMap<usize, ComponentStats> = BTreeMap::new();
    for f in (0..graph.n_firms).filter(|&f| firm_on[f]) {
        let root = uf.find(f);
        stats.entry(root).or_insert(ComponentStats { workers: 0, obs: 0, min_firm: f });
    }
    for (w, fs) in graph.worker_firms.iter().enumerate() {
        if !worker_on[w] {
            continue;
        }
        let mut root = None;
        let mut obs = 0;
        for &(f, c) in fs.iter().filter(|(f, _)| firm_on[*f]) {
            root = Some(uf.find(f));
            obs += c;
        }
        if let Some(r) = root {
            let s = stats.get_mut(&r).expect("component registered");
            s.workers += 1;
            s.obs += obs;
        }
    }
    let mut best: Option<(usize, ComponentStats)> = None;
    for (&root, s) in &stats {
        if s.workers == 0 {
            continue;
        }
        if best.as_ref().is_none_or(|(_, b)| s.better_than(b)) {
            best = Some((root, *s));
        }
    }
    let mut firm_mask = vec![false; graph.n_firms];
    let mut worker_mask = vec![false; graph.n_workers()];
    let Some((root, _)) = best else {
        return (worker_mask, firm_mask);
    };
    for f in 0..graph.n_firms {
        if firm_on[f] && uf.find(f) == root {
            firm_mask[f] = true;
        }
    }
    for (w, fs) in graph.worker_firms.iter().enumerate() {
        if worker_on[w] && fs.iter().any(|&(f, _)| firm_mask[f]) {
            worker_mask[w] = true;
        }
    }
    (worker_mask, firm_mask)
}

fn mask_to_set(worker_mask: &[bool], firm_mask: &[bool], kind: SetKind) -> ConnectedSet {
    ConnectedSet {
        firms: (0..firm_mask.len()).filter(|&f| firm_mask[f]).collect(),
        workers: (0..worker_mask.len()).filter(|&w| worker_mask[w]).collect(),
        kind,
    }
}

/// Number of mover components among the firms of `graph`.
pub fn count_components(graph: &MobilityGraph) -> usize {
    let mut uf = UnionFind::new(graph.n_firms);
    for &(a, b) in graph.edges.keys() {
        uf.union(a, b);
    }
    (0..graph.n_firms).filter(|&f| uf.find(f) == f).count()
}

/// Largest set of firms connected by movers, with the workers employed there.
pub fn largest_connected_set(graph: &MobilityGraph) -> ConnectedSet {
    let workers_on = vec![true; graph.n_workers()];
    let firms_on = vec![true; graph.n_firms];
    let (w, f) = best_component(graph, &workers_on, &firms_on);
    mask_to_set(&w, &f, SetKind::LargestConnected)
}

/// Workers whose removal disconnects the worker-firm graph restricted to the
/// active masks (articulation points of the bipartite graph that are workers).
/// Iterative Tarjan to stay safe on long chains.
pub(crate) fn articulation_workers(graph: &MobilityGraph, worker_on: &[bool], firm_on: &[bool]) -> Vec<usize> {
    let n_w = graph.n_workers();
    let n = n_w + graph.n_firms;
    // Node ids: workers 0..n_w, firms n_w..n.
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (w, fs) in graph.worker_firms.iter().enumerate() {
        if !worker_on[w] {
            continue;
        }
        for &(f, _) in fs {
            if firm_on[f] {
                adjacency[w].push(n_w + f);
                adjacency[n_w + f].push(w);
            }
        }
    }
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut is_cut = vec![false; n];
    let mut timer = 0;
    for start in (n_w..n).filter(|&v| firm_on[v - n_w]) {
        if disc[start] != usize::MAX {
            continue;
        }
        disc[start] = timer;
        low[start] = timer;
        timer += 1;
        let mut root_children = 0;
        // (node, parent, next adjacency position)
        let mut stack: Vec<(usize, usize, usize)> = vec![(start, usize::MAX, 0)];
        while let Some(&mut (u, parent, ref mut pos)) = stack.last_mut() {
            if *pos < adjacency[u].len() {
                let v = adjacency[u][*pos];
                *pos += 1;
                if v == parent {
                    continue;
                }
                if disc[v] == usize::MAX {
                    disc[v] = timer;
                    low[v] = timer;
                    timer += 1;
                    if u == start {
                        root_children += 1;
                    }
                    stack.push((v, u, 0));
                } else {
                    low[u] = low[u].min(disc[v]);
                }
            } else {
                stack.pop();
                if let Some(&(p, _, _)) = stack.last() {
                    low[p] = low[p].min(low[u]);
                    if p != start && low[u] >= disc[p] {
                        is_cut[p] = true;
                    }
                }
            }
        }
        if root_children > 1 {
            is_cut[start] = true;
        }
    }
    (0..n_w).filter(|&w| worker_on[w] && is_cut[w]).collect()
}

/// Shared fixed-point loop; `find_cuts` detects the workers to prune.
pub(crate) fn leave_one_out_with<F>(graph: &MobilityGraph, mut find_cuts: F) -> Result<ConnectedSet>
where
    F: FnMut(&MobilityGraph, &[bool], &[bool]) -> Vec<usize>,
{
    let start = largest_connected_set(graph);
    let mut worker_on = vec![false; graph.n_workers()];
    for &w in &start.workers {
        worker_on[w] = true;
    }
    let mut firm_on = vec![false; graph.n_firms];
    for &f in &start.firms {
        firm_on[f] = true;
    }
    loop {
        // Workers left with a single observation have leverage one.
        for w in 0..graph.n_workers() {
            if worker_on[w] {
                let obs: usize = graph.worker_firms[w].iter().filter(|(f, _)| firm_on[*f]).map(|&(_, c)| c).sum();
                if obs < 2 {
                    worker_on[w] = false;
                }
            }
        }
        let (w_mask, f_mask) = best_component(graph, &worker_on, &firm_on);
        worker_on = w_mask;
        firm_on = f_mask;
        if !firm_on.iter().any(|&b| b) {
            return Err(Error::TooSparse("leave-one-out connected set is empty".into()));
        }
        let cuts = find_cuts(graph, &worker_on, &firm_on);
        if cuts.is_empty() {
            break;
        }
        for w in cuts {
            worker_on[w] = false;
        }
    }
    Ok(mask_to_set(&worker_on, &firm_on, SetKind::LeaveOneOut))
}

/// Largest subset of the largest connected set that stays connected after
/// deleting any single worker, and where every worker keeps at least two
/// observations. On this set every observation has leverage below one.
pub fn leave_one_out_connected_set(graph: &MobilityGraph, panel: &Panel) -> Result<ConnectedSet> {
    if graph.n_workers() != panel.n_workers() || graph.n_firms != panel.n_firms() {
        return Err(Error::Mismatch("graph was not built from this panel".into()));
    }
    leave_one_out_with(graph, articulation_workers)
}

/// Average number of movers per firm in the graph.
pub fn movers_per_firm(graph: &MobilityGraph) -> f64 {
    let movers: usize = graph.worker_firms.iter().filter(|fs| fs.len() >= 2).map(|fs| fs.len()).sum();
    movers as f64 / graph.n_firms.max(1) as f64
}

/// Checks that every firm of the panel lies in one mover component.
pub fn ensure_connected(panel: &Panel) -> Result<()> {
    let components = count_components(&build_graph(panel));
    if components != 1 {
        return Err(Error::Disconnected { components });
    }
    Ok(())
}
