//! Shared benchmark inputs.

use akm_core::network::{build_graph, largest_connected_set, leave_one_out_connected_set};
use akm_core::{simulate_panel, Panel, SimConfig};

/// Simulated panel restricted to its largest connected set.
pub fn connected_panel(n_workers: usize, n_firms: usize) -> Panel {
    let config = SimConfig { n_workers, n_firms, seed: 1, ..Default::default() };
    let (panel, _) = simulate_panel(&config).expect("valid benchmark config");
    largest_connected_set(&build_graph(&panel)).restrict(&panel).expect("nonempty set")
}

/// Simulated panel restricted to its leave-one-out connected set.
pub fn leave_one_out_panel(n_workers: usize, n_firms: usize) -> Panel {
    let panel = connected_panel(n_workers, n_firms);
    leave_one_out_connected_set(&build_graph(&panel), &panel)
        .expect("dense enough")
        .restrict(&panel)
        .expect("nonempty set")
}
