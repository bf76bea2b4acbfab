use serde::{Deserialize, Serialize};

use super::{ExecutorError, RobotLimits};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    /// Pause for inference, then execute `s` steps.
    Sync,
    /// Overlap inference with execution, conditioning on the snapshot state.
    AsyncNaive,
    /// Overlap inference, condition on the predicted state at arrival and
    /// clamp the chunk prefix to the committed plan.
    AsyncRtc,
}

impl ExecMode {
    pub fn is_async(self) -> bool {
        !matches!(self, ExecMode::Sync)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExecMode::Sync => "sync",
            ExecMode::AsyncNaive => "async_naive",
            ExecMode::AsyncRtc => "async_rtc",
        }
    }
}

impl std::str::FromStr for ExecMode {
    type Err = ExecutorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sync" => Ok(ExecMode::Sync),
            "async_naive" | "naive" => Ok(ExecMode::AsyncNaive),
            "async_rtc" | "rtc" => Ok(ExecMode::AsyncRtc),
            other => Err(ExecutorError::Config(format!("unknown mode {other:?} (sync, async_naive, async_rtc)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutorConfig {
    /// Action horizon H.
    pub horizon: usize,
    /// Execution horizon s: steps between inference cycles.
    pub exec_horizon: usize,
    /// Inference delay d in control ticks.
    pub delay: usize,
    pub tick_ms: u64,
    pub completion_threshold: f64,
    pub debounce_ticks: usize,
    /// Executed-step cap after which a subtask fails.
    pub step_cap: u64,
    pub mode: ExecMode,
    pub limits: RobotLimits,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            horizon: 50,
            exec_horizon: 20,
            delay: 5,
            tick_ms: 20,
            completion_threshold: 0.95,
            debounce_ticks: 5,
            step_cap: 3000,
            mode: ExecMode::AsyncRtc,
            limits: RobotLimits::default(),
        }
    }
}

impl ExecutorConfig {
    pub fn validate(&self) -> Result<(), ExecutorError> {
        let (h, s, d) = (self.horizon, self.exec_horizon, self.delay);
        if !(d <= s && s < h) || s == 0 {
            return Err(ExecutorError::Config(format!("need d <= s < H with s > 0, got d={d}, s={s}, H={h}")));
        }
        if !(self.completion_threshold > 0.0 && self.completion_threshold < 1.0) {
            return Err(ExecutorError::Config(format!(
                "completion_threshold must lie in (0, 1), got {}",
                self.completion_threshold
            )));
        }
        if self.debounce_ticks == 0 || self.step_cap == 0 {
            return Err(ExecutorError::Config("debounce_ticks and step_cap must be positive".into()));
        }
        let l = &self.limits;
        if !(l.joint_velocity > 0.0 && l.gripper_velocity > 0.0) || l.joint_min.iter().zip(&l.joint_max).any(|(a, b)| a > b) {
            return Err(ExecutorError::Config("robot limits are inconsistent".into()));
        }
        Ok(())
    }

    /// Parses a TOML document, reporting the offending key path on type errors.
    pub fn from_toml(text: &str) -> Result<Self, ExecutorError> {
        let de = toml::Deserializer::new(text);
        let cfg: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| ExecutorError::Config(format!("{}: {}", e.path(), e.inner().message())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
