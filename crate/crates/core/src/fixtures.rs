//! Small panels used in documentation, tests and the CLI demo.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::panel::{Panel, PanelBuilder};

/// Three workers and two firms; every worker moves once. The model fits
/// exactly with firm effects (0.5, -0.5) and worker effects (2.5, 1.5, 3.0).
pub const EXACT_FIT_CSV: &str = "worker,firm,period,log_wage
1,1,1,3.0
1,2,4,2.0
2,1,1,2.0
2,2,3,1.0
3,2,1,2.5
3,1,5,3.5
";

pub fn exact_fit_panel() -> Panel {
    let mut b = PanelBuilder::new(Vec::new());
    for line in EXACT_FIT_CSV.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        b.push(f[0], f[1], f[2].parse().unwrap(), f[3].parse().unwrap(), &[]);
    }
    b.build().expect("fixture is valid")
}

/// A random connected panel with `n_workers` workers (at least `n_firms - 1`),
/// `n_firms` firms and `k` covariates. Workers `0..n_firms-1` form a chain
/// linking consecutive firms; the rest draw 2 to 5 periods at random firms.
pub fn random_connected_panel(seed: u64, n_workers: usize, n_firms: usize, k: usize) -> Panel {
    assert!(n_firms >= 1 && n_workers + 1 >= n_firms);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = (0..k).map(|c| format!("x{c}")).collect();
    let mut b = PanelBuilder::new(names);
    let psi: Vec<f64> = (0..n_firms).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.3).collect();
    let beta: Vec<f64> = (0..k).map(|c| 0.1 * (c as f64 + 1.0)).collect();
    let mut x = vec![0.0; k];
    for w in 0..n_workers {
        let alpha: f64 = rng.sample::<f64, _>(StandardNormal) * 0.5;
        let len = rng.random_range(2..=5usize);
        let chain = w + 1 < n_firms;
        for t in 0..len {
            let firm = if chain {
                if t == 0 {
                    w
                } else {
                    w + 1
                }
            } else {
                rng.random_range(0..n_firms)
            };
            for v in x.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let xb: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let noise: f64 = rng.sample::<f64, _>(StandardNormal) * 0.2;
            b.push(&w.to_string(), &firm.to_string(), t as i64, alpha + psi[firm] + xb + noise, &x);
        }
    }
    b.build().expect("random fixture is valid")
}
