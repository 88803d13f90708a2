use std::path::Path;

use serde::{Deserialize, Serialize};

use eduloop_core::becat::SelectionConfig;
use eduloop_core::data::LogSchema;
use eduloop_core::feedback::ProviderConfig;
use eduloop_core::ncd::TrainConfig;
use eduloop_core::synth::SynthConfig;

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { test_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_students: usize,
    pub budget: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_students: 100,
            budget: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub host: String,
    pub port: u16,
    pub cors_origins: Vec<String>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            cors_origins: vec!["http://localhost:5173".into()],
        }
    }
}

/// File configuration; command-line flags are applied on top.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub schema: LogSchema,
    pub split: SplitConfig,
    pub train: TrainConfig,
    pub selection: SelectionConfig,
    pub simulation: SimulationConfig,
    pub provider: ProviderConfig,
    pub serve: ServeConfig,
    pub synth: SynthConfig,
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(CliConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("reading config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| UsageError(format!("parsing config {}: {e}", path.display())).into())
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.selection.seed = seed;
        self.synth.seed = seed;
    }
}
