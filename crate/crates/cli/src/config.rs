//! Run configuration: defaults, then the TOML file, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use akm_core::correct::{Backend, CorrectionMethod, StochasticConfig};
use akm_core::diagnose::{FirmRanking, SubsampleConfig};
use akm_core::{PanelSchema, SimConfig, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetChoice {
    Largest,
    LeaveOneOut,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConnectConfig {
    pub set: SetChoice,
}

impl Default for ConnectConfig {
    fn default() -> Self {
        ConnectConfig { set: SetChoice::Largest }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeConfig {
    pub include_covariates: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    Exact,
    Stochastic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectConfig {
    pub method: CorrectionMethod,
    pub backend: BackendChoice,
    pub probes: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CorrectConfig {
    fn default() -> Self {
        let s = StochasticConfig::default();
        CorrectConfig {
            method: CorrectionMethod::LeaveOut,
            backend: BackendChoice::Exact,
            probes: s.probes,
            seed: s.seed,
            tol: s.tol,
            max_iter: s.max_iter,
        }
    }
}

impl CorrectConfig {
    pub fn backend(&self) -> Backend {
        match self.backend {
            BackendChoice::Exact => Backend::Exact,
            BackendChoice::Stochastic => Backend::Stochastic(StochasticConfig {
                probes: self.probes,
                seed: self.seed,
                tol: self.tol,
                max_iter: self.max_iter,
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventStudyConfig {
    pub ranking: FirmRanking,
    pub bins: usize,
}

impl Default for EventStudyConfig {
    fn default() -> Self {
        EventStudyConfig { ranking: FirmRanking::FirmMeanWage, bins: 4 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Top-level seed; when set it overrides every per-stage seed.
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub schema: PanelSchema,
    pub connect: ConnectConfig,
    pub solver: SolverConfig,
    pub decompose: DecomposeConfig,
    pub correct: CorrectConfig,
    pub subsample: SubsampleConfig,
    pub eventstudy: EventStudyConfig,
    pub simulate: SimConfig,
}

/// Dedicated flags that override the file.
#[derive(Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub covariates: Option<Vec<String>>,
    /// `dotted.key=value` pairs, value parsed as TOML when possible.
    pub params: Vec<String>,
}

impl RunConfig {
    pub fn load(file: Option<&Path>, overrides: &Overrides) -> CliResult<Self> {
        let mut table = match file {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
                text.parse::<toml::Table>().map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        for param in &overrides.params {
            apply_param(&mut table, param)?;
        }
        let mut config: RunConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::config(e.to_string()))?;
        if overrides.seed.is_some() {
            config.seed = overrides.seed;
        }
        if overrides.threads.is_some() {
            config.threads = overrides.threads;
        }
        if overrides.input.is_some() {
            config.input = overrides.input.clone();
        }
        if overrides.output.is_some() {
            config.output = overrides.output.clone();
        }
        if let Some(c) = &overrides.covariates {
            config.schema.covariates = c.clone();
        }
        if let Some(seed) = config.seed {
            config.simulate.seed = seed;
            config.subsample.seed = seed;
            config.correct.seed = seed;
        }
        if config.threads == Some(0) {
            return Err(CliError::config("threads must be at least 1"));
        }
        Ok(config)
    }

    pub fn input(&self) -> CliResult<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| CliError::config("no input panel given (use --input or `input` in the config)"))
    }

    pub fn output(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("akm-out"))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

fn apply_param(table: &mut toml::Table, param: &str) -> CliResult<()> {
    let (key, raw) =
        param.split_once('=').ok_or_else(|| CliError::config(format!("--param `{param}` is not key=value")))?;
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut node = table;
    for p in parents {
        let entry = node.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| CliError::config(format!("`{p}` in `{key}` is not a table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

/// Parses a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
