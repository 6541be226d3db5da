//! One function per subcommand. Each reads its inputs, writes artifacts into
//! the output directory and returns the manifest's seed record.

use std::collections::BTreeMap;

use akm_core::correct::{corrected_decomposition, CorrectedDecomposition};
use akm_core::decompose::{between_within_split, decompose_variance, reconcile};
use akm_core::diagnose::{event_study, subsample_plot, FirmRanking, EVENT_TIMES};
use akm_core::network::{count_components, movers_per_firm};
use akm_core::{
    build_graph, estimate_panel, largest_connected_set, leave_one_out_connected_set, load_panel, simulate_panel,
    ConnectedSet, CorrectionMethod, Estimates, Panel, ValidationReport,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{RunConfig, SetChoice};
use crate::error::{CliError, CliResult};
use crate::output::{sha256_file, FileDigest, OutputDir};

/// Inputs read by a command, for the manifest.
pub struct Loaded {
    pub panel: Panel,
    pub report: ValidationReport,
    pub digest: FileDigest,
}

pub fn load(config: &RunConfig) -> CliResult<Loaded> {
    let path = config.input()?;
    if !path.exists() {
        return Err(CliError::config(format!("input panel {} does not exist", path.display())));
    }
    let (panel, report) = load_panel(path, &config.schema)?;
    let digest = FileDigest { path: path.display().to_string(), sha256: sha256_file(path)? };
    Ok(Loaded { panel, report, digest })
}

fn connected_set(panel: &Panel, choice: SetChoice) -> CliResult<ConnectedSet> {
    let graph = build_graph(panel);
    Ok(match choice {
        SetChoice::Largest => largest_connected_set(&graph),
        SetChoice::LeaveOneOut => leave_one_out_connected_set(&graph, panel)?,
    })
}

fn write_panel(out: &mut OutputDir, name: &str, panel: &Panel, delimiter: char) -> CliResult<()> {
    let delim = u8::try_from(delimiter).map_err(|_| CliError::config("delimiter must be ASCII"))?;
    out.write_with(name, |w| panel.write_delimited(w, delim).map_err(CliError::from))?;
    Ok(())
}

#[derive(Serialize)]
struct PanelStats {
    n_obs: usize,
    n_workers: usize,
    n_firms: usize,
    n_periods: usize,
    n_movers: usize,
    movers_per_firm: f64,
    mover_components: usize,
}

fn panel_stats(panel: &Panel) -> PanelStats {
    let graph = build_graph(panel);
    PanelStats {
        n_obs: panel.n_obs(),
        n_workers: panel.n_workers(),
        n_firms: panel.n_firms(),
        n_periods: panel.n_periods(),
        n_movers: graph.n_movers(),
        movers_per_firm: movers_per_firm(&graph),
        mover_components: count_components(&graph),
    }
}

pub fn validate(config: &RunConfig, out: &mut OutputDir, loaded: &Loaded) -> CliResult<()> {
    out.write_json("validation.json", &json!({ "report": loaded.report, "panel": panel_stats(&loaded.panel) }))?;
    out.warnings.extend(loaded.report.warnings.iter().cloned());
    let _ = config;
    Ok(())
}

/// Restricts to the configured connected set; writes the restricted panel.
pub fn connect(config: &RunConfig, out: &mut OutputDir, panel: &Panel) -> CliResult<Panel> {
    let set = connected_set(panel, config.connect.set)?;
    let restricted = set.restrict(panel)?;
    write_panel(out, "connected.csv", &restricted, config.schema.delimiter)?;
    out.write_json(
        "connected_set.json",
        &json!({
            "kind": set.kind,
            "summary": set.summary(panel),
            "input_components": count_components(&build_graph(panel)),
        }),
    )?;
    Ok(restricted)
}

pub fn estimate(config: &RunConfig, out: &mut OutputDir, panel: &Panel) -> CliResult<Estimates> {
    let est = estimate_panel(panel, &config.solver)?;
    let beta: BTreeMap<&str, f64> =
        est.covariate_names().iter().map(String::as_str).zip(est.beta.iter().copied()).collect();
    let firms: BTreeMap<&str, f64> = est.firm_ids().iter().map(String::as_str).zip(est.psi.iter().copied()).collect();
    out.write_json(
        "estimates.json",
        &json!({
            "fit": est.report(),
            "sigma2": est.sigma2(),
            "beta": beta,
            "firm_effects": firms,
            "convergence": est.convergence,
        }),
    )?;
    out.write_csv("worker_effects.csv", |w| {
        w.write_record(["worker", "alpha"])?;
        est.worker_ids().iter().zip(&est.alpha).try_for_each(|(id, a)| w.write_record([id.clone(), a.to_string()]))
    })?;
    out.write_csv("firm_effects.csv", |w| {
        w.write_record(["firm", "psi"])?;
        est.firm_ids().iter().zip(&est.psi).try_for_each(|(id, p)| w.write_record([id.clone(), p.to_string()]))
    })?;
    Ok(est)
}

pub fn decompose(config: &RunConfig, out: &mut OutputDir, panel: &Panel, est: &Estimates) -> CliResult<()> {
    let d = decompose_variance(panel, est, config.decompose.include_covariates)?;
    let split = between_within_split(panel, Some(est))?;
    let rec = reconcile(&d, &split);
    out.write_json(
        "decomposition.json",
        &json!({ "decomposition": d, "between_within": split, "reconciliation": rec }),
    )?;
    Ok(())
}

/// Leave-out corrections need a leave-one-out connected panel; a panel that
/// is not one is restricted (and re-estimated) first.
fn correction_inputs(
    config: &RunConfig,
    panel: &Panel,
    est: Option<&Estimates>,
) -> CliResult<(Panel, Estimates, Value)> {
    if config.correct.method == CorrectionMethod::LeaveOut {
        let set = connected_set(panel, SetChoice::LeaveOneOut)?;
        let summary = json!({ "kind": set.kind, "summary": set.summary(panel) });
        if !set.covers(panel) || est.is_none() {
            let sub = set.restrict(panel)?;
            let est = estimate_panel(&sub, &config.solver)?;
            return Ok((sub, est, summary));
        }
        return Ok((panel.clone(), est.unwrap().clone(), summary));
    }
    let est = match est {
        Some(e) => e.clone(),
        None => estimate_panel(panel, &config.solver)?,
    };
    Ok((panel.clone(), est, json!({ "kind": "as_given", "n_obs": panel.n_obs() })))
}

pub fn correct(
    config: &RunConfig,
    out: &mut OutputDir,
    panel: &Panel,
    est: Option<&Estimates>,
) -> CliResult<CorrectedDecomposition> {
    let (panel, est, set) = correction_inputs(config, panel, est)?;
    let result = corrected_decomposition(&panel, &est, config.correct.method, &config.correct.backend())?;
    for c in &result.corrections {
        out.warnings.extend(c.warnings.iter().cloned());
    }
    out.write_json(
        "correction.json",
        &json!({
            "status": "ok",
            "method": config.correct.method,
            "backend": config.correct.backend(),
            "set": set,
            "plug_in": result.plug_in,
            "corrected": result.corrected,
            "corrections": result.corrections,
        }),
    )?;
    Ok(result)
}

pub fn pipeline(config: &RunConfig, out: &mut OutputDir, loaded: &Loaded) -> CliResult<()> {
    validate(config, out, loaded)?;
    let panel = connect(config, out, &loaded.panel)?;
    let est = estimate(config, out, &panel)?;
    decompose(config, out, &panel, &est)?;
    // Earlier artifacts stay valid when the correction is impossible (for
    // example, no residual degrees of freedom); the failure is recorded.
    if let Err(e) = correct(config, out, &panel, Some(&est)) {
        out.warnings.push(format!("correction skipped: {e}"));
        out.write_json("correction.json", &json!({ "status": "failed", "error": e.to_json()["error"] }))?;
    }
    Ok(())
}

pub fn subsample(config: &RunConfig, out: &mut OutputDir, panel: &Panel) -> CliResult<()> {
    let points = subsample_plot(panel, &config.subsample)?;
    out.write_csv("subsample.csv", |w| points.iter().try_for_each(|p| w.serialize(p)))?;
    let failed = points.iter().filter(|p| !p.succeeded()).count();
    if failed > 0 {
        out.warnings.push(format!("{failed} subsample points could not be estimated"));
    }
    out.write_json("subsample.json", &json!({ "config": config.subsample, "points": points }))?;
    Ok(())
}

pub fn eventstudy(config: &RunConfig, out: &mut OutputDir, panel: &Panel) -> CliResult<()> {
    let es = &config.eventstudy;
    let table = match es.ranking {
        FirmRanking::FirmMeanWage => event_study(panel, None, es.ranking, es.bins)?,
        FirmRanking::EstimatedPsi => {
            let set = largest_connected_set(&build_graph(panel));
            let sub = set.restrict(panel)?;
            let est = estimate_panel(&sub, &config.solver)?;
            event_study(&sub, Some(&est), es.ranking, es.bins)?
        }
    };
    if table.circular_ranking {
        out.warnings.push("firms ranked by effects estimated on the same wages (circular ranking)".into());
    }
    out.write_csv("event_study.csv", |w| {
        w.write_record(["origin", "destination", "count", "event_time", "mean_log_wage"])?;
        for c in &table.cells {
            for (t, m) in EVENT_TIMES.iter().zip(&c.mean_wage) {
                w.write_record([
                    c.origin.to_string(),
                    c.destination.to_string(),
                    c.count.to_string(),
                    t.to_string(),
                    m.to_string(),
                ])?;
            }
        }
        Ok(())
    })?;
    out.write_json("event_study.json", &table)?;
    Ok(())
}

pub fn simulate(config: &RunConfig, out: &mut OutputDir) -> CliResult<()> {
    let (panel, truth) = simulate_panel(&config.simulate)?;
    write_panel(out, "panel.csv", &panel, ',')?;
    out.write_csv("truth_workers.csv", |w| {
        w.write_record(["worker", "alpha"])?;
        truth.alpha.iter().enumerate().try_for_each(|(i, a)| w.write_record([i.to_string(), a.to_string()]))
    })?;
    out.write_csv("truth_firms.csv", |w| {
        w.write_record(["firm", "psi", "sigma2"])?;
        truth
            .psi
            .iter()
            .zip(&truth.sigma2_firm)
            .enumerate()
            .try_for_each(|(j, (p, s))| w.write_record([j.to_string(), p.to_string(), s.to_string()]))
    })?;
    out.write_json(
        "truth.json",
        &json!({ "config": config.simulate, "beta": truth.beta, "summary": truth.summary() }),
    )?;
    Ok(())
}
