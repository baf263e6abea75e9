//! Experiment configuration file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tailfl::fed::FedConfig;
use tailfl::quantile::bench::QuantileBenchConfig;
use tailfl::synth::SynthConfig;

use crate::CliError;

/// Everything one config file can describe. Every field has a default, so
/// `{}` is a valid (if slow) experiment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub data: SynthConfig,
    pub train: FedConfig,
    pub sweep: SweepAxes,
    pub quantile_bench: QuantileBenchConfig,
    pub compare: CompareConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    /// Tail levels tried by `compare`.
    pub thetas: Vec<f64>,
    /// Total `(epsilon, delta)` budgets of the private runs in `compare`.
    pub epsilons: Vec<f64>,
    /// Training seeds; `train` and `compare` repeat every run once per seed.
    pub seeds: Vec<u64>,
}

impl Default for SweepAxes {
    fn default() -> Self {
        Self { thetas: vec![0.1, 0.3, 0.5, 0.8], epsilons: vec![5.0], seeds: vec![0, 1, 2, 3, 4] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    /// Tilt of the tilted-ERM baseline.
    pub tilt: f64,
    /// Also run the private variants, one per budget in `sweep.epsilons`.
    pub private: bool,
    /// Share of each private tail-risk round's budget spent on the quantile.
    pub quantile_share: f64,
    /// Update clipping norm of the private runs.
    pub clip_norm: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self { tilt: 1.0, private: true, quantile_share: 0.5, clip_norm: 1.0 }
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let spec: Self = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.data.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let s = &self.sweep;
        if s.thetas.is_empty() || s.epsilons.is_empty() || s.seeds.is_empty() {
            return Err(CliError::Config("sweep axes must be non-empty".into()));
        }
        if let Some(t) = s.thetas.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(CliError::Config(format!("sweep theta {t} outside (0, 1]")));
        }
        if let Some(e) = s.epsilons.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(CliError::Config(format!("sweep epsilon {e} must be positive")));
        }
        let c = &self.compare;
        if !(c.tilt > 0.0 && c.tilt.is_finite()) {
            return Err(CliError::Config("compare.tilt must be positive".into()));
        }
        if !(c.quantile_share > 0.0 && c.quantile_share < 1.0) {
            return Err(CliError::Config("compare.quantile_share must be in (0, 1)".into()));
        }
        if !(c.clip_norm > 0.0 && c.clip_norm.is_finite()) {
            return Err(CliError::Config("compare.clip_norm must be positive".into()));
        }
        Ok(())
    }

    /// Shifts every seed by `offset`.
    pub fn with_seed_offset(mut self, offset: u64) -> Self {
        self.data.seed = self.data.seed.wrapping_add(offset);
        self.train.seed = self.train.seed.wrapping_add(offset);
        self.quantile_bench.seed = self.quantile_bench.seed.wrapping_add(offset);
        for s in &mut self.sweep.seeds {
            *s = s.wrapping_add(offset);
        }
        self
    }
}
