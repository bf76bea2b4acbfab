//! Per-tick execution records, CSV export and smoothness metrics.

use std::fmt::Write as _;

use serde::Serialize;

use super::{ExecMode, ExecutorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceEvent {
    CycleStart,
    ChunkCommit,
    SubtaskDone,
    /// Sync mode: a tick spent waiting for inference.
    Pause,
    /// Async start-up: waiting for the very first chunk.
    Warmup,
    /// No committed action for this step; the arm held position.
    Underrun,
}

impl TraceEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceEvent::CycleStart => "cycle_start",
            TraceEvent::ChunkCommit => "chunk_commit",
            TraceEvent::SubtaskDone => "subtask_done",
            TraceEvent::Pause => "pause",
            TraceEvent::Warmup => "warmup",
            TraceEvent::Underrun => "underrun",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::CycleStart, Self::ChunkCommit, Self::SubtaskDone, Self::Pause, Self::Warmup, Self::Underrun]
            .into_iter()
            .find(|e| e.as_str() == s)
    }
}

/// One wall-clock control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    /// Env step the commanded action belongs to. Pause and warm-up ticks
    /// repeat the step they are waiting at.
    pub step: u64,
    pub generation: u64,
    /// Whether the env step advanced on this tick.
    pub executed: bool,
    pub commanded: Vec<f64>,
    /// Joints then gripper, after the tick.
    pub achieved: Vec<f64>,
    pub progress: f64,
    pub events: Vec<TraceEvent>,
}

/// An inference cycle as seen by the scheduler.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkRecord {
    pub origin_step: u64,
    pub arrival_step: u64,
    /// Plan generation after the merge, or `None` if the chunk expired.
    pub generation: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionTrace {
    pub mode: ExecMode,
    pub records: Vec<TickRecord>,
    pub chunks: Vec<ChunkRecord>,
}

impl ExecutionTrace {
    pub fn new(mode: ExecMode) -> Self {
        Self { mode, records: Vec::new(), chunks: Vec::new() }
    }

    pub fn executed_steps(&self) -> u64 {
        self.records.iter().filter(|r| r.executed).count() as u64
    }

    pub fn wall_steps(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn count_event(&self, event: TraceEvent) -> usize {
        self.records.iter().filter(|r| r.events.contains(&event)).count()
    }

    /// Number of maximal runs of consecutive paused ticks.
    pub fn pause_windows(&self) -> usize {
        let mut windows = 0;
        let mut in_pause = false;
        for r in &self.records {
            let p = r.events.contains(&TraceEvent::Pause);
            if p && !in_pause {
                windows += 1;
            }
            in_pause = p;
        }
        windows
    }

    pub fn last_progress(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.progress)
    }

    /// One row per tick; floats use shortest round-trip formatting so
    /// `from_csv` restores the records exactly.
    pub fn to_csv(&self) -> String {
        let a = self.records.first().map_or(0, |r| r.commanded.len());
        let j = self.records.first().map_or(0, |r| r.achieved.len());
        let mut out = String::from("step,generation,executed");
        for k in 0..a {
            let _ = write!(out, ",commanded{k}");
        }
        for k in 0..j {
            let _ = write!(out, ",achieved{k}");
        }
        out.push_str(",progress,event\n");
        for r in &self.records {
            let _ = write!(out, "{},{},{}", r.step, r.generation, u8::from(r.executed));
            for v in r.commanded.iter().chain(&r.achieved) {
                let _ = write!(out, ",{v}");
            }
            let events: Vec<&str> = r.events.iter().map(|e| e.as_str()).collect();
            let _ = writeln!(out, ",{},{}", r.progress, events.join(";"));
        }
        out
    }

    /// Parses `to_csv` output. Chunk records are not part of the CSV.
    pub fn from_csv(text: &str, mode: ExecMode) -> Result<Self, ExecutorError> {
        let bad = |line: usize, m: String| ExecutorError::Argument(format!("trace csv line {}: {m}", line + 1));
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| bad(0, "empty file".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        let a = cols.iter().filter(|c| c.starts_with("commanded")).count();
        let j = cols.iter().filter(|c| c.starts_with("achieved")).count();
        if cols.len() != 5 + a + j
            || cols[..3] != ["step", "generation", "executed"]
            || cols[cols.len() - 2..] != ["progress", "event"]
        {
            return Err(bad(0, format!("unexpected header {header:?}")));
        }
        let mut trace = Self::new(mode);
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != cols.len() {
                return Err(bad(n, format!("expected {} fields, found {}", cols.len(), f.len())));
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|e| bad(n, format!("{}: {e}", cols[k])));
            let int = |k: usize| f[k].parse::<u64>().map_err(|e| bad(n, format!("{}: {e}", cols[k])));
            let events = f[f.len() - 1]
                .split(';')
                .filter(|e| !e.is_empty())
                .map(|e| TraceEvent::parse(e).ok_or_else(|| bad(n, format!("unknown event {e:?}"))))
                .collect::<Result<_, _>>()?;
            trace.records.push(TickRecord {
                step: int(0)?,
                generation: int(1)?,
                executed: int(2)? != 0,
                commanded: (3..3 + a).map(num).collect::<Result<_, _>>()?,
                achieved: (3 + a..3 + a + j).map(num).collect::<Result<_, _>>()?,
                progress: num(3 + a + j)?,
                events,
            });
        }
        Ok(trace)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothnessReport {
    /// Largest per-tick change of any commanded joint.
    pub max_joint_delta: f64,
    /// Σ over ticks and joints of the squared second difference of commanded joints.
    pub sum_sq_jerk: f64,
    pub wall_steps: u64,
    pub executed_steps: u64,
    pub pause_count: usize,
}

/// `joints` leading dims of each commanded action are treated as joints.
pub fn smoothness_report(trace: &ExecutionTrace, joints: usize) -> Result<SmoothnessReport, ExecutorError> {
    let rows = &trace.records;
    if rows.len() < 3 {
        return Err(ExecutorError::Argument(format!("jerk needs at least 3 ticks, trace has {}", rows.len())));
    }
    let mut max_delta: f64 = 0.0;
    for w in rows.windows(2) {
        for k in 0..joints {
            max_delta = max_delta.max((w[1].commanded[k] - w[0].commanded[k]).abs());
        }
    }
    let mut jerk = 0.0;
    for w in rows.windows(3) {
        for k in 0..joints {
            let dd = w[2].commanded[k] - 2.0 * w[1].commanded[k] + w[0].commanded[k];
            jerk += dd * dd;
        }
    }
    Ok(SmoothnessReport {
        max_joint_delta: max_delta,
        sum_sq_jerk: jerk,
        wall_steps: trace.wall_steps(),
        executed_steps: trace.executed_steps(),
        pause_count: trace.pause_windows(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: u64, c: f64, events: Vec<TraceEvent>) -> TickRecord {
        TickRecord { step, generation: 1, executed: true, commanded: vec![c, 0.0], achieved: vec![c], progress: 0.5, events }
    }

    #[test]
    fn linear_ramp_has_no_jerk() {
        let mut t = ExecutionTrace::new(ExecMode::AsyncRtc);
        t.records = (0..10).map(|i| rec(i, 0.02 * i as f64, vec![])).collect();
        let r = smoothness_report(&t, 2).unwrap();
        assert!(r.sum_sq_jerk < 1e-28);
        assert!((r.max_joint_delta - 0.02).abs() < 1e-12);
    }

    #[test]
    fn short_trace_is_an_error() {
        let mut t = ExecutionTrace::new(ExecMode::Sync);
        t.records = vec![rec(0, 0.0, vec![]), rec(1, 0.0, vec![])];
        assert!(matches!(smoothness_report(&t, 1), Err(ExecutorError::Argument(_))));
    }

    #[test]
    fn pause_windows_and_csv() {
        let mut t = ExecutionTrace::new(ExecMode::Sync);
        t.records = vec![
            rec(0, 0.0, vec![TraceEvent::CycleStart, TraceEvent::Pause]),
            rec(0, 0.0, vec![TraceEvent::Pause]),
            rec(0, 0.1, vec![TraceEvent::ChunkCommit]),
            rec(1, 0.2, vec![TraceEvent::Pause]),
        ];
        assert_eq!(t.pause_windows(), 2);
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "step,generation,executed,commanded0,commanded1,achieved0,progress,event");
        assert!(lines.next().unwrap().ends_with(",cycle_start;pause"));
        t.records[1].commanded[0] = 0.1 + 0.2;
        let back = ExecutionTrace::from_csv(&t.to_csv(), ExecMode::Sync).unwrap();
        assert_eq!(back, t);
        assert!(ExecutionTrace::from_csv("step,generation\n", ExecMode::Sync).is_err());
    }
}
