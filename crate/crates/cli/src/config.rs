//! Run configuration and the JSON documents written by each command.

use std::path::{Path, PathBuf};

use anyhow::Context;
use ccpfr::cceval::WeightScaleRule;
use ccpfr::montecarlo::ValidationReport;
use ccpfr::policy::{DroopSet, TriggerRule};
use ccpfr::solver::{DispatchSolution, Formulation};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

/// Every parameter that shaped an output document, fully resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub case: PathBuf,
    pub line_derate: f64,
    pub load_scale: f64,
    pub formulation: Formulation,
    pub epsilon: Option<f64>,
    pub deadband_mw: f64,
    pub trigger: TriggerRule,
    pub weight_scale: WeightScaleRule,
    pub max_iterations: usize,
    /// Participation factors and damping as read from the case.
    pub droops: DroopSet,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub truncate_negative: bool,
    pub outputs: Outputs,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    pub solution: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

/// Optional sweep defaults loaded with `--config`. Flags win over the file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub case: Option<PathBuf>,
    pub line_derate: Option<f64>,
    pub load_scale: Option<f64>,
    pub formulation: Option<Formulation>,
    pub epsilon: Option<f64>,
    pub deadband_mw: Option<f64>,
    pub trigger: Option<TriggerRule>,
    pub weight_scale: Option<WeightScaleRule>,
    pub max_iterations: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub truncate_negative: Option<bool>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDocument {
    pub config: RunConfig,
    /// Hash of the case after the modifiers were applied.
    pub case_hash: String,
    pub solve_seconds: f64,
    pub solution: DispatchSolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub config: RunConfig,
    pub case_hash: String,
    pub solve_seconds: f64,
    pub solution: DispatchSolution,
    pub report: ValidationReport,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
