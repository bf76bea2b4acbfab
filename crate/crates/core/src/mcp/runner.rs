//! Executes `execute_skill` calls on the simulated arm.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use super::{ProgressNotification, SkillResult, SkillStatus};
use crate::datasets::SynthOptions;
use crate::executor::{
    run_subtask, ActionSource, DistanceProgress, ExecutorConfig, FlowActionSource, LearnedProgress, ProgressSource, RampProgress,
    ReplanOracle, SimRobotState, SubtaskConditioning, SubtaskStatus, TraceEvent,
};
use crate::policy::PolicyParams;
use crate::skills::{SkillLibrary, SkillSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct SkillCall {
    pub instruction: String,
    pub subtask_id: String,
    pub completion_threshold: Option<f64>,
}

pub trait SkillRunner: Send + Sync {
    /// Runs one skill to completion, reporting progress through `notify`.
    fn run(&self, call: &SkillCall, notify: &mut dyn FnMut(ProgressNotification)) -> SkillResult;
}

type SourceFactory = dyn Fn(&SkillSpec, &SimRobotState) -> Box<dyn ActionSource> + Send + Sync;

pub enum PolicyChoice {
    /// Minimum-jerk re-planning to the skill target.
    Oracle,
    /// A trained flow policy; `instructions` is its vocabulary.
    Learned {
        params: Arc<PolicyParams>,
        instructions: Vec<String>,
    },
    Custom(Box<SourceFactory>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProgressChoice {
    /// Fraction of joint-space distance covered.
    Distance,
    /// Linear in elapsed steps.
    Ramp { length: u64 },
    /// The learned progress head (requires a learned policy).
    Learned,
}

pub struct ExecutorSkillRunner {
    pub library: SkillLibrary,
    pub config: ExecutorConfig,
    pub trace_dir: PathBuf,
    pub policy: PolicyChoice,
    pub progress: ProgressChoice,
    pub seed: u64,
    state: Mutex<SimRobotState>,
}

fn sanitize(id: &str) -> String {
    let s: String = id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    if s.is_empty() {
        "subtask".into()
    } else {
        s
    }
}

impl ExecutorSkillRunner {
    pub fn new(library: SkillLibrary, config: ExecutorConfig, trace_dir: PathBuf) -> Self {
        let home = SimRobotState::from_vector(&library.home, 0);
        Self {
            library,
            config,
            trace_dir,
            policy: PolicyChoice::Oracle,
            progress: ProgressChoice::Distance,
            seed: 0,
            state: Mutex::new(home),
        }
    }

    pub fn robot_state(&self) -> SimRobotState {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn failure(logs: Vec<String>, progress: f64, trace_ref: String) -> SkillResult {
        SkillResult { status: SkillStatus::Failure, logs, final_progress: progress, trace_ref }
    }

    fn sources(
        &self,
        skill: &SkillSpec,
        state: &SimRobotState,
    ) -> Result<(Box<dyn ActionSource>, Box<dyn ProgressSource>), String> {
        let learned_cond = |instructions: &[String]| -> Result<SubtaskConditioning, String> {
            let id = instructions
                .iter()
                .position(|i| *i == skill.instruction)
                .ok_or_else(|| format!("the policy was not trained on {:?}", skill.instruction))?;
            Ok(SubtaskConditioning::new(&skill.instruction, id, skill.target.clone()))
        };
        let action: Box<dyn ActionSource> = match &self.policy {
            PolicyChoice::Oracle => {
                let duration = SynthOptions::default().duration_for(&state.to_vector(), &skill.target) as u64;
                Box::new(ReplanOracle::new(skill.target.clone(), state.step, duration, 0.0, self.seed))
            }
            PolicyChoice::Learned { params, instructions } => {
                Box::new(FlowActionSource::new(params.clone(), learned_cond(instructions)?, self.seed ^ state.step))
            }
            PolicyChoice::Custom(f) => f(skill, state),
        };
        let progress: Box<dyn ProgressSource> = match (&self.progress, &self.policy) {
            (ProgressChoice::Distance, _) => Box::new(DistanceProgress { start: state.to_vector(), goal: skill.target.clone() }),
            (ProgressChoice::Ramp { length }, _) => Box::new(RampProgress { length: *length }),
            (ProgressChoice::Learned, PolicyChoice::Learned { params, instructions }) => {
                Box::new(LearnedProgress { params: params.clone(), conditioning: learned_cond(instructions)? })
            }
            (ProgressChoice::Learned, _) => return Err("learned progress needs a trained policy checkpoint".into()),
        };
        Ok((action, progress))
    }
}

impl SkillRunner for ExecutorSkillRunner {
    fn run(&self, call: &SkillCall, notify: &mut dyn FnMut(ProgressNotification)) -> SkillResult {
        let trace_path = self.trace_dir.join(format!("{}.csv", sanitize(&call.subtask_id)));
        let trace_ref = trace_path.display().to_string();
        let Some((_, skill)) = self.library.resolve(&call.instruction) else {
            return Self::failure(vec![format!("no skill matches instruction {:?}", call.instruction)], 0.0, trace_ref);
        };
        let mut cfg = self.config.clone();
        if let Some(t) = call.completion_threshold {
            cfg.completion_threshold = t;
        }
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        let (mut action, mut progress) = match self.sources(skill, &state) {
            Ok(s) => s,
            Err(e) => return Self::failure(vec![e], 0.0, trace_ref),
        };
        let id = call.subtask_id.clone();
        let mut last_step = state.step;
        let mut on_tick = |r: &crate::executor::TickRecord| {
            last_step = r.step;
            if r.events.contains(&TraceEvent::CycleStart) {
                notify(ProgressNotification { subtask_id: id.clone(), value: r.progress, step: r.step });
            }
        };
        let outcome = match run_subtask(&cfg, state.clone(), action.as_mut(), progress.as_mut(), &mut on_tick) {
            Ok(o) => o,
            Err(e) => return Self::failure(vec![format!("executor rejected the run: {e}")], 0.0, trace_ref),
        };
        notify(ProgressNotification { subtask_id: call.subtask_id.clone(), value: outcome.final_progress, step: last_step });
        let mut logs = outcome.logs.clone();
        logs.insert(
            0,
            format!(
                "skill {} ({} executed steps, {} wall ticks)",
                skill.label,
                outcome.trace.executed_steps(),
                outcome.trace.wall_steps()
            ),
        );
        if let Err(e) = std::fs::create_dir_all(&self.trace_dir).and_then(|_| std::fs::write(&trace_path, outcome.trace.to_csv()))
        {
            logs.push(format!("could not write trace {trace_ref}: {e}"));
        }
        *state = outcome.final_state.clone();
        let status = if outcome.status == SubtaskStatus::Success { SkillStatus::Success } else { SkillStatus::Failure };
        SkillResult { status, logs, final_progress: outcome.final_progress, trace_ref }
    }
}
