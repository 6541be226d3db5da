//! Person-year weighted variance decompositions of log wages.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::Panel;
use crate::solver::Estimates;

/// Named variance components. `Cov2*` entries hold twice the covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    VarAlpha,
    VarPsi,
    Cov2,
    VarResid,
    VarXb,
    CovXbAlpha2,
    CovXbPsi2,
}

impl Component {
    pub const CORE: [Component; 4] = [Component::VarAlpha, Component::VarPsi, Component::Cov2, Component::VarResid];
    pub const COVARIATE: [Component; 3] = [Component::VarXb, Component::CovXbAlpha2, Component::CovXbPsi2];

    pub fn name(self) -> &'static str {
        match self {
            Component::VarAlpha => "var_alpha",
            Component::VarPsi => "var_psi",
            Component::Cov2 => "cov2",
            Component::VarResid => "var_resid",
            Component::VarXb => "var_xb",
            Component::CovXbAlpha2 => "cov_xb_alpha2",
            Component::CovXbPsi2 => "cov_xb_psi2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    PlugIn,
    HomoskedasticCorrected,
    LeaveOutCorrected,
    GroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    PersonYear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    #[serde(rename = "total")]
    pub total_variance: f64,
    #[serde(flatten)]
    pub components: BTreeMap<Component, f64>,
    pub shares: BTreeMap<Component, f64>,
    /// `Corr(alpha, psi)` implied by the components; absent when a variance is not positive.
    pub corr_alpha_psi: Option<f64>,
    pub flavor: Flavor,
    pub weighting: Weighting,
}

impl Decomposition {
    /// Builds a decomposition from its components. `total` defaults to their sum.
    pub fn from_components(components: BTreeMap<Component, f64>, total: Option<f64>, flavor: Flavor) -> Self {
        let total_variance = total.unwrap_or_else(|| components.values().sum());
        let shares = components.iter().map(|(&c, &v)| (c, v / total_variance)).collect();
        let corr_alpha_psi = match (
            components.get(&Component::VarAlpha),
            components.get(&Component::VarPsi),
            components.get(&Component::Cov2),
        ) {
            (Some(&va), Some(&vp), Some(&c2)) if va > 0.0 && vp > 0.0 => Some(c2 / 2.0 / (va * vp).sqrt()),
            _ => None,
        };
        Decomposition { total_variance, components, shares, corr_alpha_psi, flavor, weighting: Weighting::PersonYear }
    }

    /// The four displayed components in order.
    pub fn core(var_alpha: f64, var_psi: f64, cov2: f64, var_resid: f64, flavor: Flavor) -> Self {
        let components = Component::CORE.into_iter().zip([var_alpha, var_psi, cov2, var_resid]).collect();
        Self::from_components(components, None, flavor)
    }

    pub fn get(&self, component: Component) -> Option<f64> {
        self.components.get(&component).copied()
    }

    pub fn var_alpha(&self) -> f64 {
        self.components[&Component::VarAlpha]
    }

    pub fn var_psi(&self) -> f64 {
        self.components[&Component::VarPsi]
    }

    pub fn cov2(&self) -> f64 {
        self.components[&Component::Cov2]
    }

    pub fn var_resid(&self) -> f64 {
        self.components[&Component::VarResid]
    }

    pub fn component_sum(&self) -> f64 {
        self.components.values().sum()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population covariance with two-pass centering.
pub(crate) fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64
}

/// Plug-in decomposition of `Var(Y - X beta)` (or of `Var(Y)` with the
/// covariate terms when `include_covariates` is set) over the estimation set.
pub fn decompose_variance(panel: &Panel, estimates: &Estimates, include_covariates: bool) -> Result<Decomposition> {
    estimates.check_panel(panel)?;
    let alpha: Vec<f64> = panel.workers().iter().map(|&w| estimates.alpha[w]).collect();
    let psi: Vec<f64> = panel.firms().iter().map(|&f| estimates.psi[f]).collect();
    let xb = estimates.xb(panel);
    let eps = &estimates.residuals;
    let mut components = BTreeMap::new();
    components.insert(Component::VarAlpha, covariance(&alpha, &alpha));
    components.insert(Component::VarPsi, covariance(&psi, &psi));
    components.insert(Component::Cov2, 2.0 * covariance(&alpha, &psi));
    components.insert(Component::VarResid, covariance(eps, eps));
    let total = if include_covariates {
        components.insert(Component::VarXb, covariance(&xb, &xb));
        components.insert(Component::CovXbAlpha2, 2.0 * covariance(&xb, &alpha));
        components.insert(Component::CovXbPsi2, 2.0 * covariance(&xb, &psi));
        covariance(panel.log_wages(), panel.log_wages())
    } else {
        let net: Vec<f64> = panel.log_wages().iter().zip(&xb).map(|(y, x)| y - x).collect();
        covariance(&net, &net)
    };
    Ok(Decomposition::from_components(components, Some(total), Flavor::PlugIn))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetweenWithinSplit {
    pub between_firm_variance: f64,
    pub within_firm_variance: f64,
    pub total_variance: f64,
}

/// Firm ANOVA split of `Var(Y)`, or of `Var(Y - X beta)` when estimates are given.
pub fn between_within_split(panel: &Panel, estimates: Option<&Estimates>) -> Result<BetweenWithinSplit> {
    let target: Vec<f64> = match estimates {
        Some(est) => {
            est.check_panel(panel)?;
            panel.log_wages().iter().zip(est.xb(panel)).map(|(y, x)| y - x).collect()
        }
        None => panel.log_wages().to_vec(),
    };
    if target.is_empty() {
        return Err(Error::EmptyPanel);
    }
    let n = target.len() as f64;
    let grand = mean(&target);
    let mut sums = vec![0.0; panel.n_firms()];
    for (&f, &y) in panel.firms().iter().zip(&target) {
        sums[f] += y;
    }
    let sizes = panel.firm_sizes();
    let firm_means: Vec<f64> = sums.iter().zip(&sizes).map(|(s, &c)| s / c as f64).collect();
    let between = sizes.iter().zip(&firm_means).map(|(&c, m)| c as f64 * (m - grand).powi(2)).sum::<f64>() / n;
    let within = panel.firms().iter().zip(&target).map(|(&f, y)| (y - firm_means[f]).powi(2)).sum::<f64>() / n;
    Ok(BetweenWithinSplit {
        between_firm_variance: between,
        within_firm_variance: within,
        total_variance: covariance(&target, &target),
    })
}

/// Worker variance attributed to each side of a between/within split:
/// the between part net of firm variance and sorting, the within part net of
/// the residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reconciliation {
    pub worker_between: f64,
    pub worker_within: f64,
    /// `worker_between + worker_within - var_alpha`.
    pub discrepancy: f64,
    /// `between + within - total`.
    pub split_discrepancy: f64,
}

pub fn reconcile(decomposition: &Decomposition, split: &BetweenWithinSplit) -> Reconciliation {
    let worker_between = split.between_firm_variance - decomposition.var_psi() - decomposition.cov2();
    let worker_within = split.within_firm_variance - decomposition.var_resid();
    Reconciliation {
        worker_between,
        worker_within,
        discrepancy: worker_between + worker_within - decomposition.var_alpha(),
        split_discrepancy: split.between_firm_variance + split.within_firm_variance - decomposition.total_variance,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeRow {
    pub component: Component,
    pub before: f64,
    pub after: f64,
    pub change: f64,
    pub share_of_total_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeTable {
    pub rows: Vec<ChangeRow>,
    pub total_before: f64,
    pub total_after: f64,
    pub total_change: f64,
}

impl ChangeTable {
    pub fn row(&self, component: Component) -> Option<&ChangeRow> {
        self.rows.iter().find(|r| r.component == component)
    }
}

/// Per-component change from `a` to `b`.
pub fn compare_decompositions(a: &Decomposition, b: &Decomposition) -> Result<ChangeTable> {
    if !a.components.keys().eq(b.components.keys()) {
        let names = |d: &Decomposition| d.components.keys().map(|c| c.name()).collect::<Vec<_>>().join(",");
        return Err(Error::Mismatch(format!("component sets differ: [{}] vs [{}]", names(a), names(b))));
    }
    let total_change = b.total_variance - a.total_variance;
    let rows = a
        .components
        .iter()
        .map(|(&component, &before)| {
            let after = b.components[&component];
            let change = after - before;
            ChangeRow { component, before, after, change, share_of_total_change: change / total_change }
        })
        .collect();
    Ok(ChangeTable { rows, total_before: a.total_variance, total_after: b.total_variance, total_change })
}
