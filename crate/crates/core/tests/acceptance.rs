//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (no libtest harness). Set `AKM_ACCEPTANCE_ONLY=7,8`
//! to run a subset.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use akm_core::correct::{compute_leverages, correct_homoskedastic, correct_leave_out, Backend, QuadraticForm};
use akm_core::decompose::{
    compare_decompositions, decompose_variance, reconcile, BetweenWithinSplit, Component, Decomposition, Flavor,
};
use akm_core::diagnose::{event_study, subsample_plot, FirmRanking, SubsampleConfig};
use akm_core::network::{build_graph, largest_connected_set, leave_one_out_connected_set, ConnectedSet};
use akm_core::simulate::{simulate_panel, truth_components, Mobility, NetworkShape, NoiseModel, SimConfig};
use akm_core::solver::{estimate_panel, Method, SolverConfig};
use akm_core::{fixtures, Error, Panel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = (bool, String);
type Criterion = (u8, &'static str, fn() -> Check);

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Least-squares slope of `ln y` on `ln x`.
fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / lx.len() as f64, ly.iter().sum::<f64>() / ly.len() as f64);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn restrict(panel: &Panel, set: &ConnectedSet) -> Panel {
    set.restrict(panel).unwrap()
}

fn largest(panel: &Panel) -> (Panel, ConnectedSet) {
    let set = largest_connected_set(&build_graph(panel));
    (restrict(panel, &set), set)
}

fn c1_solver_oracle() -> Check {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_firms = rng.random_range(1..=10);
        let n_workers = rng.random_range(n_firms.max(2)..=50);
        let k = rng.random_range(0..=3);
        let panel = fixtures::random_connected_panel(seed, n_workers, n_firms, k);
        let oracle = common::dense_fit(&panel);
        for method in [Method::Zigzag, Method::ConjugateGradient] {
            let est = estimate_panel(&panel, &SolverConfig::with_method(method)).unwrap();
            worst = worst
                .max(common::max_abs_diff(&est.alpha, &oracle.alpha))
                .max(common::max_abs_diff(&est.psi, &oracle.psi))
                .max(common::max_abs_diff(&est.beta, &oracle.beta));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (worst <= 1e-8 && secs < 10.0, format!("max-abs deviation {worst:.2e} (tol 1e-8), {secs:.2} s (limit 10 s)"))
}

fn c2_exact_fit() -> Check {
    let panel = fixtures::exact_fit_panel();
    let oracle = common::dense_fit(&panel);
    let expected_alpha = [2.5, 1.5, 3.0];
    let mut worst: f64 = common::max_abs_diff(&oracle.alpha, &expected_alpha);
    for method in [Method::Zigzag, Method::ConjugateGradient, Method::DenseOracle] {
        let est = estimate_panel(&panel, &SolverConfig::with_method(method)).unwrap();
        let gap = est.firm_effect("1").unwrap() - est.firm_effect("2").unwrap();
        worst = worst
            .max((gap - 1.0).abs())
            .max(common::max_abs_diff(&est.alpha, &expected_alpha))
            .max(est.residuals.iter().fold(0.0, |m, e| m.max(e.abs())));
    }
    (
        worst <= 1e-12,
        format!("psi1-psi2 = 1, alpha = (2.5, 1.5, 3.0), zero residuals; worst error {worst:.1e} (tol 1e-12)"),
    )
}

fn c3_additivity() -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let n_firms = rng.random_range(1..=12);
        // Enough workers that three covariates stay identified.
        let n_workers = rng.random_range(n_firms + 4..=60);
        let k = rng.random_range(0..=3);
        let panel = fixtures::random_connected_panel(10_000 + seed, n_workers, n_firms, k);
        let est = estimate_panel(&panel, &SolverConfig::default()).unwrap();
        for include in [false, true] {
            let d = decompose_variance(&panel, &est, include).unwrap();
            worst = worst.max((d.component_sum() - d.total_variance).abs());
        }
    }
    (worst <= 1e-10, format!("1000 panels, max |sum - total| = {worst:.1e} (tol 1e-10)"))
}

fn c4_level_anchor() -> Check {
    let d = Decomposition::core(0.476, 0.081, 0.108, 0.136, Flavor::PlugIn);
    let split = BetweenWithinSplit {
        between_firm_variance: 0.309,
        within_firm_variance: 0.492,
        total_variance: d.total_variance,
    };
    let r = reconcile(&d, &split);
    let total_ok = (d.total_variance - 0.801).abs() < 1e-12;
    let split_ok = r.split_discrepancy.abs() < 1e-12 && r.discrepancy.abs() < 1e-12;
    (
        total_ok && split_ok,
        format!(
            "total {:.3}; between {:.3} + within {:.3}; worker variance {:.3} between + {:.3} within",
            d.total_variance,
            split.between_firm_variance,
            split.within_firm_variance,
            r.worker_between,
            r.worker_within
        ),
    )
}

fn c5_change_anchor() -> Check {
    let before = Decomposition::core(0.084, 0.025, 0.003, 0.011, Flavor::PlugIn);
    let after = Decomposition::core(0.127, 0.052, 0.041, 0.014, Flavor::PlugIn);
    let t = compare_decompositions(&before, &after).unwrap();
    let share = t.row(Component::VarAlpha).unwrap().share_of_total_change * 100.0;
    (
        (t.total_change - 0.111).abs() < 1e-12 && share.round() == 39.0,
        format!("total change {:.3}, worker share {share:.1}% (rounds to {})", t.total_change, share.round()),
    )
}

fn c6_connectivity() -> Check {
    let mut lcc_mismatch = 0;
    for seed in 0..1000u64 {
        let panel = common::random_mover_panel(seed, 200, 300, 3);
        let set = largest_connected_set(&build_graph(&panel));
        let (mut f, mut w) = (set.firms.clone(), set.workers.clone());
        f.sort_unstable();
        w.sort_unstable();
        if (f, w) != common::bfs_largest_set(&panel) {
            lcc_mismatch += 1;
        }
    }
    let mut loo_mismatch = 0;
    let mut nonempty = 0;
    for seed in 0..200u64 {
        let panel = common::random_mover_panel(50_000 + seed, 50, 300, 3);
        let got = leave_one_out_connected_set(&build_graph(&panel), &panel);
        let want = common::brute_leave_one_out(&panel);
        let same = match (got, &want) {
            (Ok(set), Some((f, w))) => {
                nonempty += 1;
                let (mut gf, mut gw) = (set.firms, set.workers);
                gf.sort_unstable();
                gw.sort_unstable();
                &gf == f && &gw == w
            }
            (Err(Error::TooSparse(_)), None) => true,
            _ => false,
        };
        if !same {
            loo_mismatch += 1;
        }
    }
    (
        lcc_mismatch == 0 && loo_mismatch == 0,
        format!(
            "largest set: {lcc_mismatch}/1000 mismatches; leave-one-out: {loo_mismatch}/200 mismatches ({nonempty} nonempty)"
        ),
    )
}

/// Design shared by the Monte Carlo criteria: 300 firms, 3,000 workers over
/// six periods, a quarter of workers moving once (about five movers per firm).
fn mc_config(seed: u64) -> SimConfig {
    SimConfig {
        n_workers: 3_000,
        n_firms: 300,
        n_periods: 6,
        var_alpha_true: 0.1,
        var_psi_true: 0.02,
        corr_sorting: 0.2,
        movers_share: 0.25,
        noise: NoiseModel::Homoskedastic { sigma2: 0.05 },
        seed,
        ..Default::default()
    }
}

fn c7_homoskedastic() -> Check {
    let start = Instant::now();
    let reps = 200;
    let (mut plug, mut corr, mut mpf) = (Vec::new(), Vec::new(), Vec::new());
    for r in 0..reps {
        let (panel, truth) = simulate_panel(&mc_config(7_000 + r)).unwrap();
        let (sub, set) = largest(&panel);
        let true_var = truth_components(&truth, &panel, &set).unwrap().var_psi();
        let est = estimate_panel(&sub, &SolverConfig::default()).unwrap();
        let c = correct_homoskedastic(&sub, &est, &QuadraticForm::var_psi(), &Backend::Exact).unwrap();
        plug.push(c.plug_in - true_var);
        corr.push(c.corrected - true_var);
        mpf.push(akm_core::network::movers_per_firm(&build_graph(&sub)));
    }
    let (pb, pse) = mean_se(&plug);
    let (cb, cse) = mean_se(&corr);
    let secs = start.elapsed().as_secs_f64();
    (
        pb >= 5.0 * pse && cb.abs() <= 3.0 * cse && secs < 600.0,
        format!(
            "{reps} reps, {:.1} movers/firm: plug-in bias {pb:.5} ({:.1} se), corrected bias {cb:.6} ({:.2} se), {secs:.0} s",
            mean_se(&mpf).0,
            pb / pse,
            cb / cse
        ),
    )
}

fn hetero_config(seed: u64) -> SimConfig {
    SimConfig {
        network: NetworkShape::SizeSkewed { tail: 1.5 },
        noise: NoiseModel::Heteroskedastic { min: 0.02, max: 0.2, size_ordered: true },
        ..mc_config(seed)
    }
}

fn c8_leave_out() -> Check {
    let reps = 200;
    let (mut lo, mut ho) = (Vec::new(), Vec::new());
    for r in 0..reps {
        let (panel, truth) = simulate_panel(&hetero_config(8_000 + r)).unwrap();
        let set = leave_one_out_connected_set(&build_graph(&panel), &panel).unwrap();
        let sub = restrict(&panel, &set);
        let true_var = truth_components(&truth, &panel, &set).unwrap().var_psi();
        let est = estimate_panel(&sub, &SolverConfig::default()).unwrap();
        let l = correct_leave_out(&sub, &est, &QuadraticForm::var_psi(), &Backend::Exact).unwrap();
        let h = correct_homoskedastic(&sub, &est, &QuadraticForm::var_psi(), &Backend::Exact).unwrap();
        lo.push(l.corrected - true_var);
        ho.push(h.corrected - true_var);
    }
    let (lb, lse) = mean_se(&lo);
    let (hb, hse) = mean_se(&ho);
    (
        lb.abs() <= 3.0 * lse && hb.abs() >= 3.0 * hse,
        format!(
            "{reps} reps: leave-out bias {lb:.6} ({:.2} se), homoskedastic bias {hb:.6} ({:.1} se)",
            lb / lse,
            hb / hse
        ),
    )
}

fn c9_bias_direction() -> Check {
    let reps = 100;
    let mut hits = 0;
    for r in 0..reps {
        let config = SimConfig { movers_share: 0.1, ..mc_config(9_000 + r) };
        let (panel, _) = simulate_panel(&config).unwrap();
        let (sub, _) = largest(&panel);
        let est = estimate_panel(&sub, &SolverConfig::default()).unwrap();
        let cd = akm_core::correct::corrected_decomposition(
            &sub,
            &est,
            akm_core::correct::CorrectionMethod::HomoskedasticTrace,
            &Backend::Exact,
        )
        .unwrap();
        if cd.corrected.var_psi() < cd.plug_in.var_psi() && cd.corrected.cov2() > cd.plug_in.cov2() {
            hits += 1;
        }
    }
    (hits >= 95, format!("{hits}/{reps} replications with corrected var_psi < plug-in and corrected cov2 > plug-in"))
}

fn c10_subsample() -> Check {
    // Large enough that the 10% subsample still has a well-connected core.
    let config = SimConfig { n_workers: 20_000, n_firms: 200, corr_sorting: 0.2, ..mc_config(10) };
    let (panel, _) = simulate_panel(&config).unwrap();
    let (sub, _) = largest(&panel);
    let shares = vec![0.1, 0.2, 0.5, 1.0];
    let sc = SubsampleConfig { shares: shares.clone(), replicates: 50, seed: 10, ..Default::default() };
    let points = subsample_plot(&sub, &sc).unwrap();
    let medians: Vec<f64> = shares
        .iter()
        .map(|&s| median(points.iter().filter(|p| p.share_kept == s).filter_map(|p| p.corr_alpha_psi).collect()))
        .collect();
    let failed = points.iter().filter(|p| !p.succeeded()).count();
    let increasing = medians.windows(2).filter(|w| w[1] > w[0]).count();
    (
        increasing == 3,
        format!(
            "median plug-in corr by share {:?}: {} ({increasing}/3 increasing, {failed} failed points)",
            shares,
            medians.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>().join(" < ")
        ),
    )
}

fn c11_event_study() -> Check {
    let noiseless = SimConfig {
        n_workers: 2_000,
        n_firms: 4,
        n_periods: 6,
        movers_share: 0.5,
        noise: NoiseModel::Homoskedastic { sigma2: 0.0 },
        seed: 11,
        ..Default::default()
    };
    let (panel, _) = simulate_panel(&noiseless).unwrap();
    let est = estimate_panel(&panel, &SolverConfig::default()).unwrap();
    let table = event_study(&panel, Some(&est), FirmRanking::EstimatedPsi, 4).unwrap();
    let up = table.cell(1, 4).map(|c| c.change());
    let down = table.cell(4, 1).map(|c| c.change());
    let symmetric = matches!((up, down), (Some(u), Some(d)) if (u + d).abs() <= 1e-10);
    let flat = table.cells.iter().map(|c| c.pre_trend().abs().max(c.post_trend().abs())).fold(0.0, f64::max);

    let threshold = -1.0;
    let shocked = SimConfig {
        n_workers: 20_000,
        n_firms: 50,
        n_periods: 8,
        movers_share: 0.5,
        mobility: Mobility::ShockDriven { threshold, p_up: 0.3 },
        seed: 12,
        ..Default::default()
    };
    let (panel, _) = simulate_panel(&shocked).unwrap();
    let (sub, _) = largest(&panel);
    let table = event_study(&sub, None, FirmRanking::FirmMeanWage, 4).unwrap();
    let down_cells: Vec<_> = table.cells.iter().filter(|c| c.origin > c.destination).collect();
    let weight: usize = down_cells.iter().map(|c| c.count).sum();
    let dip = down_cells.iter().map(|c| c.pre_trend() * c.count as f64).sum::<f64>() / weight as f64;
    let dip_ok = dip.signum() == threshold.signum() && weight > 0;
    (
        symmetric && flat <= 1e-10 && dip_ok,
        format!(
            "Q1->Q4 {:.6} vs Q4->Q1 {:.6}, max |pre/post trend| {flat:.1e}; shock-driven pre-move change in down cells {dip:.4} over {weight} moves",
            up.unwrap_or(f64::NAN),
            down.unwrap_or(f64::NAN)
        ),
    )
}

fn c12_stochastic() -> Check {
    let panel = fixtures::random_connected_panel(12, 250, 25, 1);
    assert!(panel.n_obs() >= 500);
    let form = QuadraticForm::var_psi();
    let exact = compute_leverages(&panel, &Backend::Exact, Some(&form)).unwrap();
    let rank = (panel.n_workers() + panel.n_firms() - 1 + panel.covariate_count()) as f64;
    let rank_err = (exact.sum() - rank).abs();
    let exact_trace: f64 = exact.weights.as_ref().unwrap().iter().sum();
    let est = estimate_panel(&panel, &SolverConfig::default()).unwrap();
    let probes = [4usize, 16, 64, 256];
    let seeds = 12u64;
    let (mut trace_err, mut lev_err) = (Vec::new(), Vec::new());
    for &p in &probes {
        let (mut t2, mut lmax) = (0.0, 0.0);
        for s in 0..seeds {
            let backend = Backend::stochastic(p, 100 + s);
            let c = correct_homoskedastic(&panel, &est, &form, &backend).unwrap();
            t2 += (c.trace.unwrap() - exact_trace).powi(2);
            let lev = compute_leverages(&panel, &backend, None).unwrap();
            lmax += common::max_abs_diff(&lev.leverage, &exact.leverage);
        }
        trace_err.push((t2 / seeds as f64).sqrt());
        lev_err.push(lmax / seeds as f64);
    }
    let x: Vec<f64> = probes.iter().map(|&p| p as f64).collect();
    let st = log_log_slope(&x, &trace_err);
    let sl = log_log_slope(&x, &lev_err);
    let ok = (st + 0.5).abs() <= 0.15 && (sl + 0.5).abs() <= 0.15 && rank_err <= 1e-6;
    (ok, format!("trace slope {st:.3}, leverage slope {sl:.3} (target -0.5 +/- 0.15); |sum P - rank| {rank_err:.1e}"))
}

fn peak_rss_mb() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb / 1024.0)
}

fn c13_performance() -> Check {
    let config = SimConfig {
        n_workers: 100_000,
        n_firms: 10_000,
        n_periods: 10,
        movers_share: 0.2,
        seed: 13,
        ..Default::default()
    };
    let (panel, _) = simulate_panel(&config).unwrap();
    let (sub, _) = largest(&panel);
    let solver = SolverConfig { method: Method::ConjugateGradient, tol: 1e-10, ..Default::default() };
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let start = Instant::now();
    let one = pool(1).install(|| estimate_panel(&sub, &solver)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let many = pool(4).install(|| estimate_panel(&sub, &solver)).unwrap();
    let small = fixtures::random_connected_panel(3, 200, 20, 0);
    let small_est = estimate_panel(&small, &SolverConfig::default()).unwrap();
    let stoch = |n| {
        pool(n)
            .install(|| correct_leave_out(&small, &small_est, &QuadraticForm::var_psi(), &Backend::stochastic(32, 1)))
    };
    let threads_equal = one == many && stoch(1).ok() == stoch(4).ok();
    let mem = peak_rss_mb();
    let mem_ok = mem.is_none_or(|m| m < 4096.0);
    (
        secs < 120.0 && mem_ok && threads_equal && one.convergence.final_tolerance <= 1e-10,
        format!(
            "{} obs / {} workers / {} firms: {secs:.1} s, {} CG iterations, peak RSS {}, results identical across thread counts: {threads_equal}",
            sub.n_obs(),
            sub.n_workers(),
            sub.n_firms(),
            one.convergence.iterations,
            mem.map_or("n/a".to_string(), |m| format!("{m:.0} MB"))
        ),
    )
}

fn main() {
    let criteria: [Criterion; 13] = [
        (1, "solver oracle equivalence", c1_solver_oracle),
        (2, "exact-fit fixture", c2_exact_fit),
        (3, "decomposition additivity", c3_additivity),
        (4, "level decomposition arithmetic", c4_level_anchor),
        (5, "change table arithmetic", c5_change_anchor),
        (6, "connectivity oracles", c6_connectivity),
        (7, "homoskedastic correction unbiasedness", c7_homoskedastic),
        (8, "leave-out correction under heteroskedasticity", c8_leave_out),
        (9, "bias direction", c9_bias_direction),
        (10, "sub-sampling plot", c10_subsample),
        (11, "event-study symmetry and dip", c11_event_study),
        (12, "stochastic linear algebra", c12_stochastic),
        (13, "performance", c13_performance),
    ];
    let only: Option<Vec<u8>> =
        std::env::var("AKM_ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = 0;
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(run)) {
            Ok(out) => out,
            Err(e) => {
                let msg =
                    e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                (false, format!("panicked: {}", msg.unwrap_or_default()))
            }
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {} {name}: {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
