//! Wall-clock execution: a fixed-rate control loop on the calling thread
//! and an inference worker thread. The worker is the only writer of the
//! committed plan and publishes it through an atomically swapped snapshot,
//! so the control loop never waits on inference.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use arc_swap::ArcSwap;
use ndarray::Array2;

use super::handle::{ActionSource, InferenceRequest, Observation, ProgressSource};
use super::plan::CommittedPlan;
use super::scheduler::{SubtaskOutcome, SubtaskStatus};
use super::trace::{ExecutionTrace, TickRecord, TraceEvent};
use super::{ExecMode, ExecutorConfig, ExecutorError, SimRobotState, Simulator, ACTION_DIM};

struct Job {
    origin_step: u64,
    conditioning: SimRobotState,
    prefix: Option<Array2<f64>>,
    history: Vec<Vec<f64>>,
    issued: Instant,
}

fn worker(
    cfg: ExecutorConfig,
    mut source: Box<dyn ActionSource + Send>,
    jobs: mpsc::Receiver<Job>,
    plan: Arc<ArcSwap<CommittedPlan>>,
    step: Arc<AtomicU64>,
    errors: mpsc::Sender<String>,
) {
    let latency = Duration::from_millis(cfg.tick_ms * cfg.delay as u64);
    for job in jobs {
        let req = InferenceRequest {
            origin_step: job.origin_step,
            state: &job.conditioning,
            prefix: job.prefix.as_ref().map(|p| p.view()),
            history: &job.history,
            horizon: cfg.horizon,
        };
        let chunk = match source.infer(&req) {
            Ok(mut c) if c.actions.dim() == (cfg.horizon, ACTION_DIM) => {
                c.origin_step = job.origin_step;
                c
            }
            Ok(c) => {
                let _ = errors.send(format!("policy returned a {:?} chunk", c.actions.dim()));
                return;
            }
            Err(e) => {
                let _ = errors.send(e.to_string());
                return;
            }
        };
        // Simulated latency: the chunk is not released before d ticks have passed.
        if let Some(rest) = latency.checked_sub(job.issued.elapsed()) {
            std::thread::sleep(rest);
        }
        let arrival = step.load(Ordering::Acquire).max(job.origin_step);
        let mut next = CommittedPlan::clone(&plan.load());
        next.advance_to(arrival);
        if let Err(e) = next.merge_chunk(&chunk, arrival) {
            let _ = errors.send(e.to_string());
            return;
        }
        plan.store(Arc::new(next));
    }
}

/// Runs one subtask against the wall clock in an async mode.
pub fn run_subtask_realtime(
    cfg: &ExecutorConfig,
    initial: SimRobotState,
    action: Box<dyn ActionSource + Send>,
    progress: &mut dyn ProgressSource,
) -> Result<SubtaskOutcome, ExecutorError> {
    cfg.validate()?;
    if !cfg.mode.is_async() {
        return Err(ExecutorError::Config("wall-clock execution needs an async mode".into()));
    }
    let sim = Simulator::new(cfg.limits.clone());
    let plan = Arc::new(ArcSwap::from_pointee(CommittedPlan { base_step: initial.step, ..CommittedPlan::default() }));
    let step = Arc::new(AtomicU64::new(initial.step));
    let (job_tx, job_rx) = mpsc::channel::<Job>();
    let (err_tx, err_rx) = mpsc::channel::<String>();
    let handle = {
        let (cfg, plan, step) = (cfg.clone(), plan.clone(), step.clone());
        std::thread::spawn(move || worker(cfg, action, job_rx, plan, step, err_tx))
    };

    let tick = Duration::from_millis(cfg.tick_ms);
    let start = initial.step;
    let mut state = initial;
    let mut history = vec![state.to_vector()];
    let mut trace = ExecutionTrace::new(cfg.mode);
    let mut logs = Vec::new();
    let mut current = progress.progress(&Observation { elapsed: 0, state: &state, history: &history })?;
    let mut above = 0;
    let mut seen_generation = 0;
    let mut last_cycle: Option<u64> = None;
    let mut next_tick = Instant::now();
    let status = loop {
        if let Ok(msg) = err_rx.try_recv() {
            logs.push(format!("inference failed: {msg}"));
            break SubtaskStatus::Failure;
        }
        let t = state.step;
        let executed = t - start;
        let mut events = Vec::new();
        if executed % cfg.exec_horizon as u64 == 0 && last_cycle != Some(t) {
            let snapshot = plan.load();
            let rtc = cfg.mode == ExecMode::AsyncRtc && cfg.delay > 0 && !snapshot.actions.is_empty();
            let (conditioning, prefix) = if rtc {
                let window = snapshot.window_or_hold(&sim, &state, cfg.delay);
                let mut s = state.clone();
                for a in &window {
                    s = sim.apply(&s, a).state;
                }
                (s, Some(Array2::from_shape_fn((cfg.delay, ACTION_DIM), |(i, k)| window[i][k])))
            } else {
                (state.clone(), None)
            };
            let job = Job { origin_step: t, conditioning, prefix, history: history.clone(), issued: Instant::now() };
            if job_tx.send(job).is_err() {
                logs.push("inference worker stopped".into());
                break SubtaskStatus::Failure;
            }
            last_cycle = Some(t);
            events.push(TraceEvent::CycleStart);
        }

        next_tick += tick;
        if let Some(rest) = next_tick.checked_duration_since(Instant::now()) {
            std::thread::sleep(rest);
        }

        let snapshot = plan.load();
        if snapshot.generation != seen_generation {
            seen_generation = snapshot.generation;
            events.push(TraceEvent::ChunkCommit);
        }
        if snapshot.generation == 0 {
            events.push(TraceEvent::Warmup);
            trace.records.push(TickRecord {
                step: t,
                generation: 0,
                executed: false,
                commanded: state.hold_action(),
                achieved: state.to_vector(),
                progress: current,
                events,
            });
            continue;
        }
        let commanded = match snapshot.action_at(t) {
            Some(a) => a.to_vec(),
            None => {
                events.push(TraceEvent::Underrun);
                state.hold_action()
            }
        };
        state = sim.apply(&state, &commanded).state;
        step.store(state.step, Ordering::Release);
        history.push(state.to_vector());
        current = match progress.progress(&Observation { elapsed: state.step - start, state: &state, history: &history }) {
            Ok(p) => p,
            Err(e) => {
                logs.push(format!("progress estimate failed: {e}"));
                break SubtaskStatus::Failure;
            }
        };
        above = if current >= cfg.completion_threshold { above + 1 } else { 0 };
        trace.records.push(TickRecord {
            step: t,
            generation: snapshot.generation,
            executed: true,
            commanded,
            achieved: state.to_vector(),
            progress: current,
            events,
        });
        if above >= cfg.debounce_ticks {
            trace.records.last_mut().expect("just pushed").events.push(TraceEvent::SubtaskDone);
            break SubtaskStatus::Success;
        }
        if state.step - start >= cfg.step_cap {
            logs.push(format!("step cap of {} reached with progress {current:.3}", cfg.step_cap));
            break SubtaskStatus::Failure;
        }
    };
    drop(job_tx);
    let _ = handle.join();
    let done_step = (status == SubtaskStatus::Success).then(|| trace.records.last().map_or(0, |r| r.step));
    Ok(SubtaskOutcome { status, trace, final_state: state, final_progress: current, done_step, logs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::handle::{DistanceProgress, ReplanOracle};

    #[test]
    fn realtime_oracle_run_completes_without_pauses() {
        let cfg = ExecutorConfig { tick_ms: 1, mode: ExecMode::AsyncRtc, ..ExecutorConfig::default() };
        let goal = vec![0.4, 0.2, 0.0, 0.0, 0.0, 0.0, 1.0];
        let src = ReplanOracle::new(goal.clone(), 0, 120, 0.0, 0);
        let mut prog = DistanceProgress { start: vec![0.0; 7], goal };
        let out = run_subtask_realtime(&cfg, SimRobotState::default(), Box::new(src), &mut prog).unwrap();
        assert_eq!(out.status, SubtaskStatus::Success, "{:?}", out.logs);
        assert_eq!(out.trace.count_event(TraceEvent::Pause), 0);
        assert!(out.trace.count_event(TraceEvent::ChunkCommit) >= 2);
    }
}
