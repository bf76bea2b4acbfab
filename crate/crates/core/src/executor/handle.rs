//! What the scheduler needs from a policy: action chunks on request and a
//! completion estimate per tick. Oracle and learned implementations live
//! side by side so the scheduler can be exercised without training.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{RobotLimits, SimRobotState, ACTION_DIM};
use crate::policy::features::{instruction_code, observation_features, INSTRUCTION_CODE_DIM};
use crate::policy::{self, min_jerk, oracle_policy, ActionChunk, Context, PolicyError, PolicyParams, WaypointScript};

/// Everything an inference call may condition on.
#[derive(Debug, Clone)]
pub struct InferenceRequest<'a> {
    pub origin_step: u64,
    /// Snapshot state, or the predicted state at arrival in RTC mode.
    pub state: &'a SimRobotState,
    /// Committed actions for the first rows of the chunk (RTC mode).
    pub prefix: Option<ArrayView2<'a, f64>>,
    /// Executed states so far, oldest first, ending at the snapshot.
    pub history: &'a [Vec<f64>],
    pub horizon: usize,
}

pub trait ActionSource {
    fn infer(&mut self, request: &InferenceRequest<'_>) -> Result<ActionChunk, PolicyError>;
}

/// State after a tick, with the executed history that led to it.
#[derive(Debug, Clone)]
pub struct Observation<'a> {
    /// Executed steps since the subtask started.
    pub elapsed: u64,
    pub state: &'a SimRobotState,
    pub history: &'a [Vec<f64>],
}

pub trait ProgressSource {
    fn progress(&mut self, obs: &Observation<'_>) -> Result<f64, PolicyError>;
}

fn lerp_into(row: &mut [f64], a: &[f64], b: &[f64], s: f64) {
    for ((r, x), y) in row.iter_mut().zip(a).zip(b) {
        *r = x + (y - x) * s;
    }
}

/// Re-plans a minimum-jerk move from the conditioning state to a (noisy)
/// goal on every request, finishing at `start_step + duration` or after
/// `min_duration` steps, whichever is later. Rows covered by a prefix are
/// copied and the move starts where the prefix ends.
#[derive(Debug, Clone)]
pub struct ReplanOracle {
    pub goal: Vec<f64>,
    pub start_step: u64,
    pub duration: u64,
    pub min_duration: u64,
    /// Standard deviation of the per-request goal perturbation on joints.
    pub goal_noise: f64,
    rng: ChaCha8Rng,
}

impl ReplanOracle {
    pub fn new(goal: Vec<f64>, start_step: u64, duration: u64, goal_noise: f64, seed: u64) -> Self {
        Self { goal, start_step, duration, min_duration: 10, goal_noise, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl ActionSource for ReplanOracle {
    fn infer(&mut self, req: &InferenceRequest<'_>) -> Result<ActionChunk, PolicyError> {
        let p = req.prefix.map_or(0, |x| x.nrows());
        let mut goal = self.goal.clone();
        for g in goal.iter_mut().take(ACTION_DIM - 1) {
            *g += self.goal_noise * self.rng.sample::<f64, _>(StandardNormal);
        }
        let from = req.state.to_vector();
        let begin = req.origin_step + p as u64;
        let end = self.start_step + self.duration;
        let span = end.saturating_sub(begin).max(self.min_duration) as f64;
        let mut actions = Array2::zeros((req.horizon, ACTION_DIM));
        if let Some(prefix) = req.prefix {
            actions.slice_mut(ndarray::s![..p, ..]).assign(&prefix);
        }
        for i in p..req.horizon {
            let s = min_jerk((i - p + 1) as f64 / span);
            lerp_into(actions.row_mut(i).as_slice_mut().expect("row-major"), &from, &goal, s);
        }
        Ok(ActionChunk::new(req.origin_step, actions))
    }
}

/// Follows a waypoint script anchored at `start_step`.
#[derive(Debug, Clone)]
pub struct ScriptOracle {
    pub script: WaypointScript,
    pub start_step: u64,
    pub limits: RobotLimits,
}

impl ActionSource for ScriptOracle {
    fn infer(&mut self, req: &InferenceRequest<'_>) -> Result<ActionChunk, PolicyError> {
        let mut local = req.state.clone();
        local.step = req.state.step.saturating_sub(self.start_step);
        let mut chunk = oracle_policy(&self.script, &local, req.horizon, &self.limits)?;
        if let Some(prefix) = req.prefix {
            // The script is planned from the conditioning state; keep the
            // committed prefix verbatim in front of it.
            let p = prefix.nrows();
            let tail = chunk.actions.slice(ndarray::s![..req.horizon - p, ..]).to_owned();
            chunk.actions.slice_mut(ndarray::s![..p, ..]).assign(&prefix);
            chunk.actions.slice_mut(ndarray::s![p.., ..]).assign(&tail);
        }
        chunk.origin_step = req.origin_step;
        Ok(chunk)
    }
}

/// Replays recorded actions indexed by step since `start_step`; the last
/// action repeats once the recording runs out.
#[derive(Debug, Clone)]
pub struct ReplayActionSource {
    pub actions: Vec<Vec<f64>>,
    pub start_step: u64,
}

impl ActionSource for ReplayActionSource {
    fn infer(&mut self, req: &InferenceRequest<'_>) -> Result<ActionChunk, PolicyError> {
        if self.actions.is_empty() {
            return Err(PolicyError::Argument("nothing to replay".into()));
        }
        let p = req.prefix.map_or(0, |x| x.nrows());
        let last = self.actions.len() - 1;
        let mut actions = Array2::zeros((req.horizon, ACTION_DIM));
        if let Some(prefix) = req.prefix {
            actions.slice_mut(ndarray::s![..p, ..]).assign(&prefix);
        }
        for i in p..req.horizon {
            let k = (req.origin_step + i as u64).saturating_sub(self.start_step) as usize;
            actions.row_mut(i).iter_mut().zip(&self.actions[k.min(last)]).for_each(|(a, v)| *a = *v);
        }
        Ok(ActionChunk::new(req.origin_step, actions))
    }
}

/// Conditioning shared by the learned action and progress sources.
#[derive(Debug, Clone)]
pub struct SubtaskConditioning {
    pub instruction_id: usize,
    pub code: [f64; INSTRUCTION_CODE_DIM],
    pub goal: Vec<f64>,
}

impl SubtaskConditioning {
    pub fn new(instruction: &str, instruction_id: usize, goal: Vec<f64>) -> Self {
        Self { instruction_id, code: instruction_code(instruction), goal }
    }

    pub fn context(&self, history: &[Vec<f64>], state: &[f64]) -> Context {
        Context {
            observation_features: observation_features(history, &self.goal, &self.code),
            instruction_id: self.instruction_id,
            robot_state: state.to_vec(),
        }
    }
}

/// Samples chunks from a trained flow policy.
#[derive(Debug, Clone)]
pub struct FlowActionSource {
    pub params: std::sync::Arc<PolicyParams>,
    pub conditioning: SubtaskConditioning,
    pub euler_steps: usize,
    rng: ChaCha8Rng,
}

impl FlowActionSource {
    pub fn new(params: std::sync::Arc<PolicyParams>, conditioning: SubtaskConditioning, seed: u64) -> Self {
        let euler_steps = params.config.euler_steps;
        Self { params, conditioning, euler_steps, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl ActionSource for FlowActionSource {
    fn infer(&mut self, req: &InferenceRequest<'_>) -> Result<ActionChunk, PolicyError> {
        if req.horizon != self.params.config.horizon {
            return Err(PolicyError::Config(format!(
                "executor horizon {} differs from the policy's {}",
                req.horizon, self.params.config.horizon
            )));
        }
        let state = req.state.to_vector();
        let ctx = if req.prefix.is_some() {
            // Condition on history extended by the predicted arrival state.
            let mut hist = req.history.to_vec();
            hist.push(state.clone());
            self.conditioning.context(&hist, &state)
        } else {
            self.conditioning.context(req.history, &state)
        };
        let actions = policy::sample_actions(&self.params, &ctx, req.prefix, self.euler_steps, &mut self.rng)?;
        Ok(ActionChunk::new(req.origin_step, actions))
    }
}

/// Linear ramp reaching 1 after `length` executed steps.
#[derive(Debug, Clone)]
pub struct RampProgress {
    pub length: u64,
}

impl ProgressSource for RampProgress {
    fn progress(&mut self, obs: &Observation<'_>) -> Result<f64, PolicyError> {
        Ok((obs.elapsed as f64 / self.length.max(1) as f64).min(1.0))
    }
}

/// Fraction of the initial joint-space distance to the goal already covered.
#[derive(Debug, Clone)]
pub struct DistanceProgress {
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
}

impl ProgressSource for DistanceProgress {
    fn progress(&mut self, obs: &Observation<'_>) -> Result<f64, PolicyError> {
        let q = obs.state.to_vector();
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let total = dist(&self.start, &self.goal);
        if total < 1e-9 {
            return Ok(1.0);
        }
        Ok((1.0 - dist(&q, &self.goal) / total).clamp(0.0, 1.0))
    }
}

/// Replays a fixed sequence; the last value repeats.
#[derive(Debug, Clone)]
pub struct ScriptedProgress {
    pub values: Vec<f64>,
}

impl ProgressSource for ScriptedProgress {
    fn progress(&mut self, obs: &Observation<'_>) -> Result<f64, PolicyError> {
        let i = (obs.elapsed as usize).saturating_sub(1);
        Ok(self.values.get(i).or(self.values.last()).copied().unwrap_or(0.0))
    }
}

/// The trained progress head.
#[derive(Debug, Clone)]
pub struct LearnedProgress {
    pub params: std::sync::Arc<PolicyParams>,
    pub conditioning: SubtaskConditioning,
}

impl ProgressSource for LearnedProgress {
    fn progress(&mut self, obs: &Observation<'_>) -> Result<f64, PolicyError> {
        let ctx = self.conditioning.context(obs.history, &obs.state.to_vector());
        policy::progress_forward(&self.params, &ctx)
    }
}
