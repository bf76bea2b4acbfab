//! Observation features built from proprioceptive history.
//!
//! Each token describes one history frame: the robot state `q`, the
//! remaining offset to the subtask goal, a scaled one-step velocity, the
//! cube root of the distance to the goal and a fixed code derived from the
//! instruction text. Minimum-jerk approaches close the last few percent of
//! the distance slowly; the cube root keeps that tail resolvable.

use ndarray::Array2;
use sha2::{Digest, Sha256};

/// Tokens per observation.
pub const OBS_LEN: usize = 4;
/// Env steps between consecutive tokens.
pub const OBS_STRIDE: usize = 3;
/// Width of the instruction code appended to every token.
pub const INSTRUCTION_CODE_DIM: usize = 8;
const VELOCITY_GAIN: f64 = 10.0;

pub const fn feature_dim(state_dim: usize) -> usize {
    3 * state_dim + 1 + INSTRUCTION_CODE_DIM
}

/// Deterministic code in `[-1, 1]^8` for an instruction string.
pub fn instruction_code(instruction: &str) -> [f64; INSTRUCTION_CODE_DIM] {
    let digest = Sha256::digest(instruction.trim().to_lowercase().as_bytes());
    let mut code = [0.0; INSTRUCTION_CODE_DIM];
    for (k, c) in code.iter_mut().enumerate() {
        let word = u16::from_le_bytes([digest[2 * k], digest[2 * k + 1]]);
        *c = word as f64 / u16::MAX as f64 * 2.0 - 1.0;
    }
    code
}

/// Features for the latest frame of `history` (oldest first, non-empty).
/// Frames before the start of history repeat the first frame.
pub fn observation_features(history: &[Vec<f64>], goal: &[f64], code: &[f64; INSTRUCTION_CODE_DIM]) -> Array2<f64> {
    assert!(!history.is_empty(), "history must hold at least one frame");
    let s = goal.len();
    let last = history.len() - 1;
    let mut out = Array2::zeros((OBS_LEN, feature_dim(s)));
    for token in 0..OBS_LEN {
        let back = (OBS_LEN - 1 - token) * OBS_STRIDE;
        let idx = last.saturating_sub(back);
        let q = &history[idx];
        let prev = &history[idx.saturating_sub(1)];
        let mut row = out.row_mut(token);
        let dist = q.iter().zip(goal).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt();
        row[3 * s] = dist.cbrt();
        for k in 0..s {
            row[k] = q[k];
            row[s + k] = goal[k] - q[k];
            row[2 * s + k] = (q[k] - prev[k]) * VELOCITY_GAIN;
        }
        for (k, c) in code.iter().enumerate() {
            row[3 * s + 1 + k] = *c;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn code_is_stable_and_bounded() {
        let a = instruction_code("Pick up the beaker");
        assert_eq!(a, instruction_code("  pick up the beaker "));
        assert_ne!(a, instruction_code("open the lid"));
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn short_history_repeats_first_frame() {
        let goal = vec![1.0, 0.0];
        let feats = observation_features(&[vec![0.5, 0.0]], &goal, &[0.0; INSTRUCTION_CODE_DIM]);
        assert_eq!(feats.dim(), (OBS_LEN, feature_dim(2)));
        for row in feats.rows() {
            assert_eq!(row[0], 0.5);
            assert_eq!(row[2], 0.5);
            assert_eq!(row[4], 0.0);
        }
    }

    #[test]
    fn latest_token_has_velocity() {
        let history: Vec<Vec<f64>> = (0..10).map(|t| vec![t as f64 * 0.01]).collect();
        let feats = observation_features(&history, &[1.0], &[0.0; INSTRUCTION_CODE_DIM]);
        let last = feats.row(OBS_LEN - 1);
        assert!((last[0] - 0.09).abs() < 1e-12);
        assert!((last[2] - 0.1).abs() < 1e-12);
        assert!((last[3] - 0.91f64.cbrt()).abs() < 1e-12);
        let first = feats.row(0);
        assert!((first[0] - 0.0).abs() < 1e-12);
    }
}
