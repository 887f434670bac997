//! Experiment configuration file.
//!
//! Relative artifact and output paths are resolved against the directory that
//! holds the configuration file.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qmetro_core::experiment::Aggregation;
use qmetro_core::models::QuarterKind;
use qmetro_core::neural::TrainConfig;

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mz,
    Fourarm,
}

impl ModelKind {
    pub fn dims(self) -> usize {
        match self {
            ModelKind::Mz => 1,
            ModelKind::Fourarm => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Exact,
    Nn,
    Freq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    /// Zero controls.
    None,
    /// Uniform controls in `[−π, π)`.
    Random,
    /// A trained policy network.
    Policy,
    /// Uniform controls keeping `truth + c` inside the particle interval.
    Window,
}

/// Where measurement outcomes come from during estimation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    /// Sampled from the ideal device model at `truth + c`.
    #[default]
    Model,
    /// Drawn from the recorded counts of the nearest dataset grid point.
    Dataset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    /// Points per axis, endpoints included.
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSpec {
    pub lo: f64,
    pub hi: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub data: u64,
    pub train: u64,
    pub estimation: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Artifacts {
    pub dataset: Option<PathBuf>,
    pub network: Option<PathBuf>,
    pub policy: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub curve: PathBuf,
    pub summary: PathBuf,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            curve: PathBuf::from("curve.csv"),
            summary: PathBuf::from("summary.json"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    #[serde(default)]
    pub quarter: QuarterKind,
    pub provider: ProviderKind,
    pub strategy: StrategyKind,
    #[serde(default)]
    pub source: SourceKind,
    /// Particle grid for the exact provider; training grid when a dataset is generated.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    /// Sub-interval of a table provider's grid kept as particles.
    #[serde(default)]
    pub restrict: Option<[f64; 2]>,
    /// Repetitions per grid point when the dataset is generated.
    #[serde(default)]
    pub r: Option<u64>,
    pub n_probes: usize,
    pub n_truths: usize,
    pub n_reps: usize,
    #[serde(default = "default_aggregation")]
    pub aggregation: Aggregation,
    /// Defaults to the particle interval, with margin 0.3 for the
    /// Mach–Zehnder over a full period and 0 otherwise.
    #[serde(default)]
    pub truth: Option<TruthSpec>,
    /// Used when no trained network is supplied; its seed is replaced by `seeds.train`.
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub artifacts: Artifacts,
    #[serde(default)]
    pub output: Outputs,
}

fn default_aggregation() -> Aggregation {
    Aggregation::Mean
}

/// Margin excluded from the truth interval when none is configured.
pub fn default_margin(model: ModelKind, lo: f64, hi: f64) -> f64 {
    if model == ModelKind::Mz && ((hi - lo) - 2.0 * PI).abs() < 1e-9 {
        0.3
    } else {
        0.0
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid experiment config: {e}")))
    }

    /// Reads a configuration and resolves its relative paths against the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.artifacts.dataset,
            &mut self.artifacts.network,
            &mut self.artifacts.policy,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.output.curve);
        fix(&mut self.output.summary);
    }

    /// Checks counts, required fields and that every referenced artifact exists.
    pub fn validate(&self) -> CliResult<()> {
        if self.n_probes == 0 || self.n_truths == 0 || self.n_reps == 0 {
            return Err(CliError::Config("n_probes, n_truths and n_reps must be at least 1".into()));
        }
        let generated = self.artifacts.dataset.is_none();
        match self.provider {
            ProviderKind::Exact if self.grid.is_none() => {
                return Err(CliError::Config("the exact provider needs a grid".into()));
            }
            ProviderKind::Nn | ProviderKind::Freq if generated && (self.grid.is_none() || self.r.is_none()) => {
                return Err(CliError::Config(
                    "without a dataset artifact both grid and r are needed to generate one".into(),
                ));
            }
            _ => {}
        }
        if self.source == SourceKind::Dataset && generated && (self.grid.is_none() || self.r.is_none()) {
            return Err(CliError::Config("the dataset source needs a dataset artifact or grid and r".into()));
        }
        if self.strategy == StrategyKind::Policy && self.artifacts.policy.is_none() {
            return Err(CliError::Config("strategy \"policy\" needs artifacts.policy".into()));
        }
        if self.restrict.is_some() && self.provider == ProviderKind::Exact {
            return Err(CliError::Config("restrict applies to table providers only".into()));
        }
        let missing: Vec<String> = [
            &self.artifacts.dataset,
            &self.artifacts.network,
            &self.artifacts.policy,
        ]
        .into_iter()
        .flatten()
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
        if !missing.is_empty() {
            return Err(CliError::Config(format!("missing artifact(s): {}", missing.join(", "))));
        }
        Ok(())
    }
}
