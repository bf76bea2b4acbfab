//! Desk-scale flow-matching action policy with a jointly trained progress
//! head. Forward and backward passes are written by hand over `ndarray`.
//!
//! Actions are modelled in a normalized space: when `relative_actions` is
//! set, `x = (a − s) / action_scale` where `s` is the conditioning robot
//! state. Noise `x0 ~ N(0, I)` is transported to `x1` along the straight
//! path `x_τ = (1 − τ) x0 + τ x1`, so the regression target is `x1 − x0`.

mod checkpoint;
pub mod features;
mod flow;
mod gradcheck;
mod model;
pub mod nn;
mod oracle;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use flow::{
    denormalize, flow_loss, normalize, progress_forward, progress_loss, progress_mse, sample_actions, sample_from_noise,
};
pub use gradcheck::{grad_check, GradCheckReport, GradCheckable, LinearProbe, PolicyGradCheck};
pub use model::{time_features, BatchItem, GradFault, LossBreakdown, PolicyParams, PROGRESS_TENSORS};
pub use oracle::{min_jerk, oracle_policy, Waypoint, WaypointScript};
pub use train::{MetricsRow, TrainSample, Trainer, TrainingSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("config error: {0}")]
    Config(String),
    #[error("argument error: {0}")]
    Argument(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("script error: {0}")]
    Script(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    /// Action horizon H.
    pub horizon: usize,
    /// Action dims A (joints + gripper).
    pub action_dim: usize,
    /// Robot-state dims S.
    pub state_dim: usize,
    /// Observation feature width D.
    pub feature_dim: usize,
    /// Observation tokens T_obs.
    pub obs_len: usize,
    pub n_instructions: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub hidden_layers: usize,
    pub time_features: usize,
    pub attn_dim: usize,
    pub progress_hidden: usize,
    pub progress_weight: f64,
    pub euler_steps: usize,
    pub relative_actions: bool,
    pub action_scale: f64,
    pub layer_norm_eps: f64,
    /// Longest clamped prefix sampled during training (0 disables prefix masking).
    pub rtc_max_prefix: usize,
    /// Fraction of training items that get a clamped prefix.
    pub rtc_prob: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            horizon: 50,
            action_dim: 7,
            state_dim: 7,
            feature_dim: features::feature_dim(7),
            obs_len: features::OBS_LEN,
            n_instructions: 16,
            embed_dim: 64,
            hidden_dim: 128,
            hidden_layers: 3,
            time_features: 16,
            attn_dim: 64,
            progress_hidden: 64,
            progress_weight: 0.1,
            euler_steps: 10,
            relative_actions: true,
            action_scale: 0.5,
            layer_norm_eps: 1e-5,
            rtc_max_prefix: 10,
            rtc_prob: 0.5,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let positive = [
            ("horizon", self.horizon),
            ("action_dim", self.action_dim),
            ("state_dim", self.state_dim),
            ("feature_dim", self.feature_dim),
            ("obs_len", self.obs_len),
            ("n_instructions", self.n_instructions),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("hidden_layers", self.hidden_layers),
            ("time_features", self.time_features),
            ("attn_dim", self.attn_dim),
            ("progress_hidden", self.progress_hidden),
            ("euler_steps", self.euler_steps),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(PolicyError::Config(format!("{name} must be positive")));
        }
        if self.relative_actions && self.action_dim != self.state_dim {
            return Err(PolicyError::Config("relative actions need action_dim == state_dim".into()));
        }
        if !(self.action_scale > 0.0) {
            return Err(PolicyError::Config("action_scale must be positive".into()));
        }
        if self.rtc_max_prefix >= self.horizon && self.rtc_max_prefix > 0 {
            return Err(PolicyError::Config("rtc_max_prefix must be below the horizon".into()));
        }
        if !(0.0..=1.0).contains(&self.rtc_prob) || self.progress_weight < 0.0 {
            return Err(PolicyError::Config("rtc_prob must lie in [0, 1] and progress_weight be non-negative".into()));
        }
        Ok(())
    }
}

/// Policy conditioning `(observations, instruction, robot state)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    /// `T_obs × D` feature sequence.
    pub observation_features: Array2<f64>,
    pub instruction_id: usize,
    /// Joint positions followed by the gripper scalar.
    pub robot_state: Vec<f64>,
}

impl Context {
    pub fn validate(&self, cfg: &PolicyConfig) -> Result<(), PolicyError> {
        let (t, d) = self.observation_features.dim();
        if t == 0 || d != cfg.feature_dim {
            return Err(PolicyError::Config(format!("observation features are {t}x{d}, expected Tx{}", cfg.feature_dim)));
        }
        if self.robot_state.len() != cfg.state_dim {
            return Err(PolicyError::Config(format!(
                "robot state has {} dims, expected {}",
                self.robot_state.len(),
                cfg.state_dim
            )));
        }
        if self.instruction_id >= cfg.n_instructions {
            return Err(PolicyError::Config(format!(
                "instruction id {} out of range (< {})",
                self.instruction_id, cfg.n_instructions
            )));
        }
        if !self.robot_state.iter().chain(self.observation_features.iter()).all(|v| v.is_finite()) {
            return Err(PolicyError::Numeric("non-finite context".into()));
        }
        Ok(())
    }
}

/// A flow-matching training draw, in normalized action space.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub x0: Array2<f64>,
    pub x1: Array2<f64>,
    pub tau: f64,
    /// Leading rows held at `x1` with flow timestep 1 and excluded from the loss.
    pub prefix_len: usize,
}

impl FlowSample {
    pub fn new(x0: Array2<f64>, x1: Array2<f64>, tau: f64) -> Self {
        Self { x0, x1, tau, prefix_len: 0 }
    }

    /// `(1 − τ) x0 + τ x1` on the suffix, `x1` on the clamped prefix.
    pub fn x_tau(&self) -> Array2<f64> {
        let mut x = &self.x0 * (1.0 - self.tau) + &self.x1 * self.tau;
        for r in 0..self.prefix_len.min(x.nrows()) {
            x.row_mut(r).assign(&self.x1.row(r));
        }
        x
    }

    pub fn validate(&self, cfg: &PolicyConfig) -> Result<(), PolicyError> {
        let shape = (cfg.horizon, cfg.action_dim);
        if self.x0.dim() != shape || self.x1.dim() != shape {
            return Err(PolicyError::Config(format!(
                "flow sample shapes {:?}/{:?}, expected {shape:?}",
                self.x0.dim(),
                self.x1.dim()
            )));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(PolicyError::Argument(format!("tau {} outside [0, 1]", self.tau)));
        }
        if self.prefix_len >= cfg.horizon {
            return Err(PolicyError::Argument("prefix covers the whole chunk".into()));
        }
        Ok(())
    }
}

/// `H × A` actions starting at env step `origin_step`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChunk {
    pub origin_step: u64,
    pub actions: Array2<f64>,
}

impl ActionChunk {
    pub fn new(origin_step: u64, actions: Array2<f64>) -> Self {
        Self { origin_step, actions }
    }

    pub fn horizon(&self) -> usize {
        self.actions.nrows()
    }

    pub fn action(&self, i: usize) -> Vec<f64> {
        self.actions.row(i).to_vec()
    }

    pub fn is_finite(&self) -> bool {
        self.actions.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgressEstimate {
    pub value: f64,
    pub at_step: u64,
}
