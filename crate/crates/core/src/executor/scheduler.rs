//! Deterministic virtual-clock scheduler. Inference and control are
//! interleaved on one thread: a request is computed when its cycle starts
//! and its chunk is held back until `d` ticks later.
//!
//! Within one executed step the order is: merge an arriving chunk, start a
//! new cycle if one is due, then apply the committed action.

use ndarray::Array2;

use super::handle::{ActionSource, InferenceRequest, Observation, ProgressSource};
use super::plan::{CommittedPlan, MergeOutcome};
use super::trace::{ChunkRecord, ExecutionTrace, TickRecord, TraceEvent};
use super::{ExecMode, ExecutorConfig, ExecutorError, SimRobotState, Simulator, ACTION_DIM};
use crate::policy::ActionChunk;

#[derive(Debug, Clone, PartialEq)]
pub enum SubtaskStatus {
    Success,
    Failure,
}

#[derive(Debug, Clone)]
pub struct SubtaskOutcome {
    pub status: SubtaskStatus,
    pub trace: ExecutionTrace,
    pub final_state: SimRobotState,
    pub final_progress: f64,
    /// Env step on which the subtask was declared done.
    pub done_step: Option<u64>,
    pub logs: Vec<String>,
}

/// When a run ends.
#[derive(Debug, Clone, Copy)]
pub enum StopRule {
    /// Progress at or above the configured threshold for the debounce window.
    Progress,
    /// After exactly this many executed steps.
    Steps(u64),
}

struct Pending {
    chunk: ActionChunk,
    arrival: u64,
}

pub struct Scheduler<'a> {
    cfg: &'a ExecutorConfig,
    sim: Simulator,
    state: SimRobotState,
    start_step: u64,
    plan: CommittedPlan,
    pending: Option<Pending>,
    history: Vec<Vec<f64>>,
    trace: ExecutionTrace,
    progress: f64,
    above: usize,
}

impl<'a> Scheduler<'a> {
    pub fn new(cfg: &'a ExecutorConfig, initial: SimRobotState) -> Result<Self, ExecutorError> {
        cfg.validate()?;
        let sim = Simulator::new(cfg.limits.clone());
        Ok(Self {
            cfg,
            sim,
            start_step: initial.step,
            history: vec![initial.to_vector()],
            state: initial,
            plan: CommittedPlan::default(),
            pending: None,
            trace: ExecutionTrace::new(cfg.mode),
            progress: 0.0,
            above: 0,
        })
    }

    pub fn state(&self) -> &SimRobotState {
        &self.state
    }

    pub fn plan(&self) -> &CommittedPlan {
        &self.plan
    }

    pub fn trace(&self) -> &ExecutionTrace {
        &self.trace
    }

    /// Issues an inference request at the current step. In RTC mode the
    /// request is conditioned on the state predicted `d` steps ahead and
    /// carries the committed actions for those steps as a prefix.
    pub fn start_cycle(&mut self, source: &mut dyn ActionSource, delay: usize) -> Result<(), ExecutorError> {
        if self.pending.is_some() {
            return Err(ExecutorError::Invariant(format!(
                "cycle started at step {} while another request is in flight",
                self.state.step
            )));
        }
        let t = self.state.step;
        let h = self.cfg.horizon;
        let rtc = self.cfg.mode == ExecMode::AsyncRtc && delay > 0 && !self.plan.actions.is_empty();
        let (conditioning, prefix) = if rtc {
            let window = self.plan.window_or_hold(&self.sim, &self.state, delay);
            let mut s = self.state.clone();
            for a in &window {
                s = self.sim.apply(&s, a).state;
            }
            let prefix = Array2::from_shape_fn((delay, ACTION_DIM), |(i, k)| window[i][k]);
            (s, Some(prefix))
        } else {
            (self.state.clone(), None)
        };
        let request = InferenceRequest {
            origin_step: t,
            state: &conditioning,
            prefix: prefix.as_ref().map(|p| p.view()),
            history: &self.history,
            horizon: h,
        };
        let mut chunk = source.infer(&request)?;
        if chunk.actions.dim() != (h, ACTION_DIM) {
            return Err(ExecutorError::Policy(crate::policy::PolicyError::Config(format!(
                "policy returned a {:?} chunk, expected ({h}, {ACTION_DIM})",
                chunk.actions.dim()
            ))));
        }
        chunk.origin_step = t;
        let arrival = if self.cfg.mode.is_async() { t + delay as u64 } else { t };
        self.pending = Some(Pending { chunk, arrival });
        Ok(())
    }

    fn merge_pending(&mut self, events: &mut Vec<TraceEvent>) -> Result<(), ExecutorError> {
        let Some(p) = self.pending.take_if(|p| p.arrival == self.state.step) else {
            return Ok(());
        };
        self.plan.advance_to(self.state.step);
        let outcome = self.plan.merge_chunk(&p.chunk, p.arrival)?;
        let generation = match outcome {
            MergeOutcome::Committed(_) => {
                events.push(TraceEvent::ChunkCommit);
                Some(self.plan.generation)
            }
            MergeOutcome::Expired => None,
        };
        self.trace.chunks.push(ChunkRecord { origin_step: p.chunk.origin_step, arrival_step: p.arrival, generation });
        Ok(())
    }

    fn idle_tick(&mut self, events: Vec<TraceEvent>) {
        self.trace.records.push(TickRecord {
            step: self.state.step,
            generation: self.plan.generation,
            executed: false,
            commanded: self.state.hold_action(),
            achieved: self.state.to_vector(),
            progress: self.progress,
            events,
        });
    }

    fn execute_tick(&mut self, mut events: Vec<TraceEvent>, progress: &mut dyn ProgressSource) -> Result<(), ExecutorError> {
        let t = self.state.step;
        let commanded = match self.plan.action_at(t) {
            Some(a) => a.to_vec(),
            None => {
                events.push(TraceEvent::Underrun);
                log::warn!("no committed action for step {t}; holding position");
                self.state.hold_action()
            }
        };
        let out = self.sim.apply(&self.state, &commanded);
        self.state = out.state;
        self.history.push(self.state.to_vector());
        self.plan.advance_to(self.state.step);
        let obs = Observation { elapsed: self.state.step - self.start_step, state: &self.state, history: &self.history };
        let p = progress.progress(&obs)?;
        if !p.is_finite() {
            return Err(ExecutorError::Policy(crate::policy::PolicyError::Numeric(format!("progress {p} at step {t}"))));
        }
        self.progress = p;
        self.above = if p >= self.cfg.completion_threshold { self.above + 1 } else { 0 };
        self.trace.records.push(TickRecord {
            step: t,
            generation: self.plan.generation,
            executed: true,
            commanded,
            achieved: self.state.to_vector(),
            progress: p,
            events,
        });
        Ok(())
    }

    fn executed(&self) -> u64 {
        self.state.step - self.start_step
    }

    fn finished(&self, stop: StopRule) -> bool {
        match stop {
            StopRule::Progress => self.above >= self.cfg.debounce_ticks,
            StopRule::Steps(n) => self.executed() >= n,
        }
    }

    fn cap_reached(&self, stop: StopRule) -> bool {
        matches!(stop, StopRule::Progress) && self.executed() >= self.cfg.step_cap
    }

    /// Runs until `stop` fires or the step cap is reached. Returns whether `stop` fired.
    pub fn run(
        &mut self,
        action: &mut dyn ActionSource,
        progress: &mut dyn ProgressSource,
        stop: StopRule,
        on_tick: &mut dyn FnMut(&TickRecord),
    ) -> Result<bool, ExecutorError> {
        let obs = Observation { elapsed: 0, state: &self.state, history: &self.history };
        self.progress = progress.progress(&obs)?;
        let (s, d) = (self.cfg.exec_horizon as u64, self.cfg.delay);
        let mut reported = 0;
        let mut report = |trace: &ExecutionTrace, reported: &mut usize| {
            for r in &trace.records[*reported..] {
                on_tick(r);
            }
            *reported = trace.records.len();
        };

        if self.cfg.mode.is_async() {
            self.start_cycle(action, d)?;
            for i in 0..d {
                let mut ev = vec![TraceEvent::Warmup];
                if i == 0 {
                    ev.insert(0, TraceEvent::CycleStart);
                }
                self.idle_tick(ev);
            }
            // The first chunk is committed as soon as it arrives: nothing has
            // executed during warm-up, so none of it has expired.
            if let Some(p) = self.pending.as_mut() {
                p.arrival = self.state.step;
            }
            let mut first = true;
            while !self.finished(stop) && !self.cap_reached(stop) {
                let mut events = Vec::new();
                if first && d == 0 {
                    events.push(TraceEvent::CycleStart);
                }
                self.merge_pending(&mut events)?;
                let t = self.executed();
                if !first && t % s == 0 {
                    self.start_cycle(action, d)?;
                    events.push(TraceEvent::CycleStart);
                    if d == 0 {
                        self.merge_pending(&mut events)?;
                    }
                }
                first = false;
                self.execute_tick(events, progress)?;
                report(&self.trace, &mut reported);
            }
        } else {
            while !self.finished(stop) && !self.cap_reached(stop) {
                let mut events = Vec::new();
                if self.executed() % s == 0 {
                    self.start_cycle(action, d)?;
                    for i in 0..d {
                        let ev = if i == 0 { vec![TraceEvent::CycleStart, TraceEvent::Pause] } else { vec![TraceEvent::Pause] };
                        self.idle_tick(ev);
                    }
                    if d == 0 {
                        events.push(TraceEvent::CycleStart);
                    }
                    self.merge_pending(&mut events)?;
                }
                self.execute_tick(events, progress)?;
                report(&self.trace, &mut reported);
            }
        }
        let done = self.finished(stop);
        if done {
            if matches!(stop, StopRule::Progress) {
                if let Some(last) = self.trace.records.last_mut() {
                    last.events.push(TraceEvent::SubtaskDone);
                }
            }
            report(&self.trace, &mut reported);
        }
        Ok(done)
    }

    pub fn into_parts(self) -> (ExecutionTrace, SimRobotState, f64) {
        (self.trace, self.state, self.progress)
    }
}

/// Executes one subtask until the progress estimate stays above the
/// completion threshold for the debounce window, or the step cap is hit.
/// Policy and scheduler errors end the subtask with a failure status.
pub fn run_subtask(
    cfg: &ExecutorConfig,
    initial: SimRobotState,
    action: &mut dyn ActionSource,
    progress: &mut dyn ProgressSource,
    on_tick: &mut dyn FnMut(&TickRecord),
) -> Result<SubtaskOutcome, ExecutorError> {
    let mut sched = Scheduler::new(cfg, initial)?;
    let result = sched.run(action, progress, StopRule::Progress, on_tick);
    let mut logs = Vec::new();
    let status = match result {
        Ok(true) => SubtaskStatus::Success,
        Ok(false) => {
            logs.push(format!(
                "step cap of {} reached with progress {:.3} (threshold {})",
                cfg.step_cap, sched.progress, cfg.completion_threshold
            ));
            SubtaskStatus::Failure
        }
        Err(ExecutorError::Config(m)) => return Err(ExecutorError::Config(m)),
        Err(e) => {
            logs.push(format!("execution aborted at step {}: {e}", sched.state.step));
            SubtaskStatus::Failure
        }
    };
    let done_step = (status == SubtaskStatus::Success).then(|| sched.trace.records.last().map_or(0, |r| r.step));
    let (trace, final_state, final_progress) = sched.into_parts();
    Ok(SubtaskOutcome { status, trace, final_state, final_progress, done_step, logs })
}

/// Executes exactly `steps` env steps regardless of progress.
pub fn run_fixed(
    cfg: &ExecutorConfig,
    initial: SimRobotState,
    action: &mut dyn ActionSource,
    progress: &mut dyn ProgressSource,
    steps: u64,
) -> Result<ExecutionTrace, ExecutorError> {
    let mut sched = Scheduler::new(cfg, initial)?;
    sched.run(action, progress, StopRule::Steps(steps), &mut |_| {})?;
    Ok(sched.into_parts().0)
}
