//! Minimum-jerk waypoint follower. Generates the synthetic demonstrations
//! and stands in for the learned policy in executor tests.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ActionChunk, PolicyError};
use crate::executor::{RobotLimits, SimRobotState, ACTION_DIM};

/// Normalized minimum-jerk position `10τ³ − 15τ⁴ + 6τ⁵`, clamped to `[0, 1]`.
pub fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    #[serde(default)]
    pub label: String,
    /// Joint targets followed by the gripper command.
    pub target: Vec<f64>,
    /// Ticks allotted to reach this waypoint from the previous one.
    pub duration: u64,
}

/// A start configuration and a timed sequence of waypoints. Time 0 is the
/// step at which the script starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointScript {
    pub start: Vec<f64>,
    pub waypoints: Vec<Waypoint>,
}

impl WaypointScript {
    pub fn validate(&self, limits: &RobotLimits) -> Result<(), PolicyError> {
        if !limits.contains(&self.start) {
            return Err(PolicyError::Script(format!("start configuration {:?} violates joint limits", self.start)));
        }
        if self.waypoints.is_empty() {
            return Err(PolicyError::Script("script has no waypoints".into()));
        }
        for (k, w) in self.waypoints.iter().enumerate() {
            if w.target.len() != ACTION_DIM {
                return Err(PolicyError::Script(format!("waypoint {k} has {} dims, expected {ACTION_DIM}", w.target.len())));
            }
            if !limits.contains(&w.target) {
                return Err(PolicyError::Script(format!("waypoint {k} ({}) is outside the joint limits", w.label)));
            }
            if w.duration == 0 {
                return Err(PolicyError::Script(format!("waypoint {k} has zero duration")));
            }
        }
        Ok(())
    }

    pub fn total_duration(&self) -> u64 {
        self.waypoints.iter().map(|w| w.duration).sum()
    }

    /// `(index, start_time, end_time)` of the segment active at `t`, or
    /// `None` once the script has finished.
    pub fn segment_at(&self, t: u64) -> Option<(usize, u64, u64)> {
        let mut begin = 0;
        for (k, w) in self.waypoints.iter().enumerate() {
            let end = begin + w.duration;
            if t < end {
                return Some((k, begin, end));
            }
            begin = end;
        }
        None
    }

    fn segment_origin(&self, k: usize) -> &[f64] {
        if k == 0 {
            &self.start
        } else {
            &self.waypoints[k - 1].target
        }
    }

    /// Reference position at script time `t`.
    pub fn reference_at(&self, t: u64) -> Vec<f64> {
        match self.segment_at(t) {
            None => self.waypoints.last().map(|w| w.target.clone()).unwrap_or_else(|| self.start.clone()),
            Some((k, begin, end)) => {
                let s = min_jerk((t - begin) as f64 / (end - begin) as f64);
                lerp(self.segment_origin(k), &self.waypoints[k].target, s)
            }
        }
    }
}

fn lerp(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + (y - x) * s).collect()
}

/// Actions for steps `state.step .. state.step + horizon`, where the
/// action at step `t` is the position to reach at the end of tick `t`.
///
/// The active segment is re-planned as a minimum-jerk move from the
/// current state to its waypoint over the segment's remaining time; later
/// segments follow the reference. A state already at its waypoint yields
/// hold actions.
pub fn oracle_policy(
    script: &WaypointScript,
    state: &SimRobotState,
    horizon: usize,
    limits: &RobotLimits,
) -> Result<ActionChunk, PolicyError> {
    script.validate(limits)?;
    let current = state.to_vector();
    let t0 = state.step;
    let mut actions = Array2::zeros((horizon, ACTION_DIM));
    let active = script.segment_at(t0);
    for i in 0..horizon {
        let t = t0 + i as u64 + 1;
        let pos = match active {
            Some((k, _, end)) if t <= end => {
                let remaining = (end - t0) as f64;
                lerp(&current, &script.waypoints[k].target, min_jerk((t - t0) as f64 / remaining))
            }
            Some(_) => script.reference_at(t),
            None => script.waypoints.last().unwrap().target.clone(),
        };
        actions.row_mut(i).iter_mut().zip(&pos).for_each(|(a, p)| *a = *p);
    }
    Ok(ActionChunk::new(state.step, actions))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn script(start: Vec<f64>, target: Vec<f64>, duration: u64) -> WaypointScript {
        WaypointScript { start, waypoints: vec![Waypoint { label: "move".into(), target, duration }] }
    }

    #[test]
    fn min_jerk_endpoints_and_symmetry() {
        assert_eq!(min_jerk(0.0), 0.0);
        assert_eq!(min_jerk(1.0), 1.0);
        assert!((min_jerk(0.5) - 0.5).abs() < 1e-15);
        assert!((min_jerk(0.3) + min_jerk(0.7) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn at_waypoint_holds() {
        let target = vec![0.2, 0.1, 0.0, 0.0, 0.0, 0.0, 1.0];
        let s = script(target.clone(), target.clone(), 40);
        let state = SimRobotState::from_vector(&target, 0);
        let chunk = oracle_policy(&s, &state, 50, &RobotLimits::default()).unwrap();
        for row in chunk.actions.rows() {
            assert_eq!(row.to_vec(), target);
        }
    }

    #[test]
    fn finished_script_holds_last_waypoint() {
        let s = script(vec![0.0; 7], vec![0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 10);
        let state = SimRobotState::from_vector(&[0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 25);
        let chunk = oracle_policy(&s, &state, 5, &RobotLimits::default()).unwrap();
        assert!(chunk.actions.column(0).iter().all(|v| *v == 0.3));
    }

    #[test]
    fn outside_limits_is_script_error() {
        let s = script(vec![0.0; 7], vec![7.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 10);
        let err = oracle_policy(&s, &SimRobotState::default(), 5, &RobotLimits::default()).unwrap_err();
        assert!(matches!(err, PolicyError::Script(_)));
    }
}
