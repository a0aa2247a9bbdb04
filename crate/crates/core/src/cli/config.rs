use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{DecompositionConfig, InterpConfig, SampleDistribution};
use crate::diff::DiffMethod;
use crate::error::{Error, Result};
use crate::grid::{AxisSpec, Basis};
use crate::optim::Stage;
use crate::pde::{CollocationScheme, PdeProblem};

/// Pipelines selectable from a config or the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubcommandKind {
    Interp,
    Solve,
    Probe,
    Decompose,
}

impl SubcommandKind {
    pub fn name(&self) -> &'static str {
        match self {
            SubcommandKind::Interp => "interp",
            SubcommandKind::Solve => "solve",
            SubcommandKind::Probe => "probe",
            SubcommandKind::Decompose => "decompose",
        }
    }
}

/// Training-loop settings shared by every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub log_every: usize,
    pub loss_target: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { log_every: 100, loss_target: None }
    }
}

/// Theory probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    /// κ² of the empirical value Gram matrix over many sample draws.
    Gram,
    /// Lebesgue constants of CGL grids.
    Lebesgue,
    /// Finite-difference mis-specification against the spectral derivative.
    Epsop,
    /// κ² of spectral collocation matrices.
    Collocation,
    /// All theory quantities for one (N, M).
    Theory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub kind: ProbeKind,
    pub n: usize,
    pub m: usize,
    /// Number of sample draws for the Gram probe.
    pub seeds: usize,
    pub sampling: SampleDistribution,
    /// Grid sizes swept by the Lebesgue, ε_op and collocation probes.
    pub ns: Vec<usize>,
    /// Basis of the ε_op probe grid.
    pub basis: Basis,
    pub half_bandwidth: usize,
    /// Derivative order of the collocation probe.
    pub order: usize,
    pub trials: usize,
    pub dense: usize,
    pub decay: f64,
    pub frequency: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            kind: ProbeKind::Theory,
            n: 16,
            m: 4000,
            seeds: 20,
            sampling: SampleDistribution::Uniform,
            ns: vec![32, 64, 128, 256],
            basis: Basis::Fourier,
            half_bandwidth: 1,
            order: 2,
            trials: 200,
            dense: 2048,
            decay: 2.0,
            frequency: 4.0,
        }
    }
}

/// A complete run description. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub subcommand: Option<SubcommandKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Reference solution file (header line, then `coords... value` rows).
    #[serde(default)]
    pub reference: Option<PathBuf>,
    #[serde(default)]
    pub problem: Option<PdeProblem>,
    #[serde(default)]
    pub grid: Option<Vec<AxisSpec>>,
    #[serde(default)]
    pub deriv: Option<Vec<DiffMethod>>,
    #[serde(default)]
    pub lambda_ibc: Option<f64>,
    #[serde(default)]
    pub collocation: CollocationScheme,
    #[serde(default)]
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub interp: InterpConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub decompose: DecompositionConfig,
}

impl RunConfig {
    /// Parse TOML text.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parse JSON text: either a bare config or a report whose `config`
    /// field echoes one.
    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let cfg = match v.get("format") {
            Some(_) => v.get("config").cloned().ok_or_else(|| Error::Config("report has no config".into()))?,
            None => v,
        };
        serde_json::from_value(cfg).map_err(|e| Error::Config(e.to_string()))
    }

    /// Load from a `.toml` file, or a `.json` config / report.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn to_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }
}
