//! The committed action plan shared between inference and control.

use std::collections::VecDeque;

use super::{ExecutorError, SimRobotState, Simulator};
use crate::policy::ActionChunk;

/// Upcoming actions indexed by absolute env step, starting at `base_step`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommittedPlan {
    pub base_step: u64,
    pub actions: VecDeque<Vec<f64>>,
    /// Number of chunks committed so far.
    pub generation: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeOutcome {
    /// `n` actions from the chunk were committed.
    Committed(usize),
    /// The chunk expired before it arrived; nothing was committed.
    Expired,
}

impl CommittedPlan {
    /// Last step covered, or `None` when empty.
    pub fn end_step(&self) -> Option<u64> {
        (!self.actions.is_empty()).then(|| self.base_step + self.actions.len() as u64 - 1)
    }

    pub fn action_at(&self, step: u64) -> Option<&[f64]> {
        step.checked_sub(self.base_step).and_then(|i| self.actions.get(i as usize)).map(Vec::as_slice)
    }

    /// Drops actions for steps before `step`.
    pub fn advance_to(&mut self, step: u64) {
        while self.base_step < step && !self.actions.is_empty() {
            self.actions.pop_front();
            self.base_step += 1;
        }
        if self.actions.is_empty() {
            self.base_step = step;
        }
    }

    /// Replaces every action from `arrival_step` on with the chunk's actions
    /// for the same steps. Steps before `arrival_step` are untouched.
    pub fn merge_chunk(&mut self, chunk: &ActionChunk, arrival_step: u64) -> Result<MergeOutcome, ExecutorError> {
        if arrival_step < chunk.origin_step {
            return Err(ExecutorError::Invariant(format!(
                "chunk from step {} cannot arrive at earlier step {arrival_step}",
                chunk.origin_step
            )));
        }
        if !chunk.is_finite() {
            return Err(ExecutorError::Policy(crate::policy::PolicyError::Numeric("chunk contains non-finite actions".into())));
        }
        let skip = (arrival_step - chunk.origin_step) as usize;
        if skip >= chunk.horizon() {
            return Ok(MergeOutcome::Expired);
        }
        if arrival_step < self.base_step || self.actions.is_empty() {
            self.actions.clear();
            self.base_step = arrival_step;
        } else {
            let keep = ((arrival_step - self.base_step) as usize).min(self.actions.len());
            self.actions.truncate(keep);
            if keep < (arrival_step - self.base_step) as usize {
                // Gap between the old plan's end and the arrival: start afresh.
                self.actions.clear();
                self.base_step = arrival_step;
            }
        }
        for i in skip..chunk.horizon() {
            self.actions.push_back(chunk.action(i));
        }
        self.generation += 1;
        Ok(MergeOutcome::Committed(chunk.horizon() - skip))
    }

    /// Actions for `[from, from + k)`, with a hold of the state reached so
    /// far substituted where the plan has no action.
    pub fn window_or_hold(&self, sim: &Simulator, state: &SimRobotState, k: usize) -> Vec<Vec<f64>> {
        let mut s = state.clone();
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let a = self.action_at(state.step + i as u64).map(<[f64]>::to_vec).unwrap_or_else(|| s.hold_action());
            s = sim.apply(&s, &a).state;
            out.push(a);
        }
        out
    }
}

/// Forward-simulates the committed actions for `k` ticks from `state`.
pub fn predict_future_state(
    sim: &Simulator,
    state: &SimRobotState,
    plan: &CommittedPlan,
    k: usize,
) -> Result<SimRobotState, ExecutorError> {
    let mut s = state.clone();
    for _ in 0..k {
        let a = plan.action_at(s.step).ok_or_else(|| ExecutorError::Argument(format!("plan does not cover step {}", s.step)))?;
        s = sim.apply(&s, a).state;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn chunk(origin: u64, h: usize, tag: f64) -> ActionChunk {
        ActionChunk::new(origin, Array2::from_shape_fn((h, 7), |(i, _)| tag + i as f64))
    }

    #[test]
    fn merge_replaces_from_arrival() {
        let mut plan = CommittedPlan::default();
        plan.merge_chunk(&chunk(50, 50, 0.0), 50).unwrap();
        plan.advance_to(105);
        let out = plan.merge_chunk(&chunk(100, 50, 1000.0), 105).unwrap();
        assert_eq!(out, MergeOutcome::Committed(45));
        assert_eq!(plan.base_step, 105);
        assert_eq!(plan.action_at(105).unwrap()[0], 1005.0);
        assert_eq!(plan.action_at(149).unwrap()[0], 1049.0);
        assert!(plan.action_at(150).is_none());
        assert_eq!(plan.generation, 2);
    }

    #[test]
    fn zero_delay_replaces_whole_plan() {
        let mut plan = CommittedPlan::default();
        plan.merge_chunk(&chunk(0, 10, 0.0), 0).unwrap();
        plan.merge_chunk(&chunk(0, 10, 50.0), 0).unwrap();
        assert_eq!(plan.action_at(0).unwrap()[0], 50.0);
        assert_eq!(plan.end_step(), Some(9));
    }

    #[test]
    fn merge_keeps_pending_prefix() {
        let mut plan = CommittedPlan::default();
        plan.merge_chunk(&chunk(0, 10, 0.0), 0).unwrap();
        plan.merge_chunk(&chunk(2, 10, 100.0), 4).unwrap();
        assert_eq!(plan.action_at(3).unwrap()[0], 3.0);
        assert_eq!(plan.action_at(4).unwrap()[0], 102.0);
    }

    #[test]
    fn late_chunk_expires() {
        let mut plan = CommittedPlan::default();
        plan.merge_chunk(&chunk(0, 10, 0.0), 0).unwrap();
        assert_eq!(plan.merge_chunk(&chunk(0, 10, 5.0), 10).unwrap(), MergeOutcome::Expired);
        assert_eq!(plan.generation, 1);
    }

    #[test]
    fn predict_ramp_and_hold() {
        let sim = Simulator::default();
        let state = SimRobotState::default();
        let mut actions = Array2::zeros((10, 7));
        for i in 0..10 {
            actions[[i, 2]] = 0.01 * (i + 1) as f64;
        }
        let mut plan = CommittedPlan::default();
        plan.merge_chunk(&ActionChunk::new(0, actions), 0).unwrap();
        let s = predict_future_state(&sim, &state, &plan, 5).unwrap();
        assert!((s.joints[2] - 0.05).abs() < 1e-15);
        assert_eq!(s.step, 5);
        assert_eq!(predict_future_state(&sim, &state, &plan, 0).unwrap(), state);
        assert!(matches!(predict_future_state(&sim, &state, &plan, 11), Err(ExecutorError::Argument(_))));
    }
}
