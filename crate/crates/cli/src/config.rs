//! Run configuration: built-in defaults, overridden by an optional TOML
//! file, overridden in turn by command-line flags.

use std::path::Path;

use chembot_core::executor::ExecutorConfig;
use chembot_core::planner::PlannerConfig;
use chembot_core::policy::PolicyConfig;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub steps: u64,
    pub lr: f64,
    pub batch_size: usize,
    /// Write a checkpoint every this many steps (0: only at the end).
    pub checkpoint_every: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self { steps: 4000, lr: 1e-3, batch_size: 64, checkpoint_every: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub sigma: f64,
    pub theta: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { sigma: 0.2, theta: 0.3 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub executor: ExecutorConfig,
    pub planner: PlannerConfig,
    /// Network shape for `train`; `n_instructions` follows the dataset.
    pub policy: Option<PolicyConfig>,
    pub train: TrainSettings,
    pub eval: EvalSettings,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
        let cfg: Self =
            toml::from_str(&text).map_err(|e| CliError::Input(format!("config {}: {}", path.display(), e.message())))?;
        cfg.executor.validate().map_err(|e| CliError::Input(format!("config {}: executor: {e}", path.display())))?;
        Ok(cfg)
    }
}
