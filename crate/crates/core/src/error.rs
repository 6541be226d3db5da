use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the estimation pipeline.
///
/// Every variant maps to the module that raised it and a stable string code so
/// that front ends can report failures in a machine-readable way.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed delimited input: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing mandatory column `{0}`")]
    MissingColumn(String),
    #[error("no valid rows after validation")]
    NoValidRows,
    #[error("restriction leaves an empty panel")]
    EmptyPanel,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("estimation set is not connected ({components} mover components); restrict to a connected set first")]
    Disconnected { components: usize },
    #[error("{method} did not converge within {iterations} iterations (last tolerance {tolerance:e})")]
    NonConvergence { method: &'static str, iterations: usize, tolerance: f64 },
    #[error("covariate column {column} is collinear with the worker and firm indicators")]
    Collinear { column: usize },
    #[error("no differenced observations: every worker has a single observation")]
    NoDifferences,
    #[error("{kind} `{id}` is outside the estimation set")]
    UnknownEntity { kind: &'static str, id: String },
    #[error("input mismatch: {0}")]
    Mismatch(String),
    #[error("observation {observation} has leverage {leverage} (not leave-one-out connected)")]
    LeverageOne { observation: usize, leverage: f64 },
    #[error("data too sparse: {0}")]
    TooSparse(String),
    #[error("no degrees of freedom left for the residual variance")]
    NoDegreesOfFreedom,
    #[error("no qualifying movers for the event window")]
    NoQualifyingMovers,
    #[error("infeasible simulation config: {0}")]
    InfeasibleSimulation(String),
    #[error("problem too large for the dense backend ({size} parameters)")]
    TooLargeForDense { size: usize },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Module that raised the error.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Io { .. }
            | Error::Csv(_)
            | Error::MissingColumn(_)
            | Error::NoValidRows
            | Error::EmptyPanel
            | Error::Json(_) => "panel",
            Error::Disconnected { .. } | Error::TooSparse(_) => "network",
            Error::NonConvergence { .. }
            | Error::Collinear { .. }
            | Error::NoDifferences
            | Error::UnknownEntity { .. } => "solver",
            Error::Mismatch(_) => "decompose",
            Error::LeverageOne { .. } | Error::NoDegreesOfFreedom | Error::TooLargeForDense { .. } => "correct",
            Error::NoQualifyingMovers => "diagnose",
            Error::InfeasibleSimulation(_) => "simulate",
            Error::InvalidConfig(_) => "config",
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv(_) => "malformed_input",
            Error::MissingColumn(_) => "missing_column",
            Error::NoValidRows => "no_valid_rows",
            Error::EmptyPanel => "empty_panel",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Disconnected { .. } => "not_connected",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Collinear { .. } => "collinear_covariate",
            Error::NoDifferences => "no_differences",
            Error::UnknownEntity { .. } => "unknown_entity",
            Error::Mismatch(_) => "mismatch",
            Error::LeverageOne { .. } => "leverage_one",
            Error::TooSparse(_) => "too_sparse",
            Error::NoDegreesOfFreedom => "no_dof",
            Error::NoQualifyingMovers => "no_qualifying_movers",
            Error::InfeasibleSimulation(_) => "infeasible_simulation",
            Error::TooLargeForDense { .. } => "too_large_for_dense",
            Error::Json(_) => "json",
        }
    }

    /// Whether the failure is numerical rather than a data or config problem.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::Collinear { .. }
                | Error::LeverageOne { .. }
                | Error::NoDegreesOfFreedom
                | Error::TooLargeForDense { .. }
        )
    }
}
