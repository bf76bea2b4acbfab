//! Position-controlled kinematic arm: every tick the commanded joint
//! targets are clamped to the per-tick velocity limit and the joint range.

use serde::{Deserialize, Serialize};

/// Arm joints (UR3-class six-axis arm).
pub const JOINTS: usize = 6;
/// Joints plus the gripper scalar.
pub const ACTION_DIM: usize = JOINTS + 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotLimits {
    pub joint_min: [f64; JOINTS],
    pub joint_max: [f64; JOINTS],
    /// Max |Δjoint| per tick, radians.
    pub joint_velocity: f64,
    /// Max |Δgripper| per tick, normalized units.
    pub gripper_velocity: f64,
}

impl Default for RobotLimits {
    fn default() -> Self {
        let two_pi = 2.0 * std::f64::consts::PI;
        Self { joint_min: [-two_pi; JOINTS], joint_max: [two_pi; JOINTS], joint_velocity: 0.05, gripper_velocity: 0.05 }
    }
}

impl RobotLimits {
    /// Whether a full action vector (joints + gripper) lies inside the range limits.
    pub fn contains(&self, action: &[f64]) -> bool {
        action.len() == ACTION_DIM
            && action.iter().all(|v| v.is_finite())
            && (0..JOINTS).all(|j| action[j] >= self.joint_min[j] && action[j] <= self.joint_max[j])
            && (0.0..=1.0).contains(&action[JOINTS])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRobotState {
    pub joints: [f64; JOINTS],
    /// 0 = open, 1 = closed.
    pub gripper: f64,
    /// Executed env step.
    pub step: u64,
}

impl Default for SimRobotState {
    fn default() -> Self {
        Self { joints: [0.0; JOINTS], gripper: 0.0, step: 0 }
    }
}

impl SimRobotState {
    pub fn from_vector(v: &[f64], step: u64) -> Self {
        let mut joints = [0.0; JOINTS];
        joints.copy_from_slice(&v[..JOINTS]);
        Self { joints, gripper: v[JOINTS], step }
    }

    /// Joints followed by the gripper.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = self.joints.to_vec();
        v.push(self.gripper);
        v
    }

    /// Action that keeps the arm where it is.
    pub fn hold_action(&self) -> Vec<f64> {
        self.to_vector()
    }
}

/// Result of one simulator tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickOutcome {
    pub state: SimRobotState,
    /// Whether any dimension was limited by velocity or range.
    pub clamped: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Simulator {
    pub limits: RobotLimits,
}

impl Simulator {
    pub fn new(limits: RobotLimits) -> Self {
        Self { limits }
    }

    /// Applies one commanded action and advances the env step.
    pub fn apply(&self, state: &SimRobotState, commanded: &[f64]) -> TickOutcome {
        debug_assert_eq!(commanded.len(), ACTION_DIM);
        let lim = &self.limits;
        let mut next = state.clone();
        let mut clamped = false;
        for j in 0..JOINTS {
            let target = commanded[j];
            let delta = (target - state.joints[j]).clamp(-lim.joint_velocity, lim.joint_velocity);
            let pos = (state.joints[j] + delta).clamp(lim.joint_min[j], lim.joint_max[j]);
            clamped |= pos != target;
            next.joints[j] = pos;
        }
        let g_delta = (commanded[JOINTS] - state.gripper).clamp(-lim.gripper_velocity, lim.gripper_velocity);
        let g = (state.gripper + g_delta).clamp(0.0, 1.0);
        clamped |= g != commanded[JOINTS];
        next.gripper = g;
        next.step = state.step + 1;
        TickOutcome { state: next, clamped }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hold_is_fixed_point() {
        let sim = Simulator::default();
        let s = SimRobotState { joints: [0.1, -0.2, 0.3, 0.0, 1.0, -1.0], gripper: 0.5, step: 7 };
        let out = sim.apply(&s, &s.hold_action());
        assert_eq!(out.state.joints, s.joints);
        assert_eq!(out.state.step, 8);
        assert!(!out.clamped);
    }

    #[test]
    fn velocity_clamp_records_both() {
        let sim = Simulator::default();
        let s = SimRobotState::default();
        let mut cmd = s.hold_action();
        cmd[1] = 0.3;
        let out = sim.apply(&s, &cmd);
        assert!(out.clamped);
        assert!((out.state.joints[1] - 0.05).abs() < 1e-15);
        assert_eq!(cmd[1], 0.3);
    }

    #[test]
    fn range_clamp() {
        let limits = RobotLimits { joint_min: [-0.1; JOINTS], joint_max: [0.1; JOINTS], ..RobotLimits::default() };
        let sim = Simulator::new(limits);
        let s = SimRobotState { joints: [0.09; JOINTS], gripper: 1.0, step: 0 };
        let mut cmd = s.hold_action();
        cmd[0] = 0.2;
        cmd[JOINTS] = 1.5;
        let out = sim.apply(&s, &cmd);
        assert_eq!(out.state.joints[0], 0.1);
        assert_eq!(out.state.gripper, 1.0);
        assert!(out.clamped);
    }
}
