//! Two-way fixed-effects wage models: panel ingestion, connected sets,
//! least-squares estimation, variance decompositions and their bias
//! corrections, diagnostics and a synthetic data generator.

// Negated comparisons are how the validators reject NaN; index loops walk
// several parallel arrays at once.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod design;
mod linalg;

pub mod correct;
pub mod decompose;
pub mod diagnose;
pub mod error;
pub mod fixtures;
pub mod network;
pub mod panel;
pub mod simulate;
pub mod solver;

pub use correct::{
    compute_leverages, correct_homoskedastic, correct_leave_out, corrected_decomposition, Backend,
    CorrectedDecomposition, CorrectionMethod, CorrectionResult, FormKind, LeverageTable, QuadraticForm,
    StochasticConfig,
};
pub use decompose::{
    between_within_split, compare_decompositions, decompose_variance, reconcile, BetweenWithinSplit, ChangeTable,
    Component, Decomposition, Flavor,
};
pub use diagnose::{event_study, subsample_plot, EventStudyTable, FirmRanking, SubsampleConfig, SubsamplePoint};
pub use error::{Error, Result};
pub use network::{
    build_graph, largest_connected_set, leave_one_out_connected_set, ConnectedSet, MobilityGraph, SetKind, SetSummary,
};
pub use panel::{load_panel, read_panel, Panel, PanelBuilder, PanelSchema, ValidationReport};
pub use simulate::{simulate_panel, truth_components, Mobility, NetworkShape, NoiseModel, SimConfig, SimTruth};
pub use solver::{
    estimate, estimate_first_differences, estimate_panel, Estimates, Method, Normalization, SolverConfig,
};
