//! Hierarchical success-rate rubric and binomial intervals.

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Two-sided 68% normal quantile, `Φ⁻¹(0.84)`.
pub const Z_68: f64 = 0.9945;

/// One trial scored on the three tiers: a point per successful atomic
/// action, a point per completed subtask and one for the whole task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    #[serde(default)]
    pub group: String,
    pub atomic_points: u32,
    pub atomic_max: u32,
    pub subtask_points: u32,
    pub subtask_max: u32,
    pub task_point: u32,
}

impl ScoreCard {
    pub fn s_obs(&self) -> u32 {
        self.atomic_points + self.subtask_points + self.task_point
    }

    pub fn s_max(&self) -> u32 {
        self.atomic_max + self.subtask_max + 1
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.task_point > 1 || self.atomic_points > self.atomic_max || self.subtask_points > self.subtask_max {
            return Err(EvalError::InvalidScoreCard(format!(
                "points exceed maxima in trial {:?} ({}/{} atomic, {}/{} subtask, task {})",
                self.group, self.atomic_points, self.atomic_max, self.subtask_points, self.subtask_max, self.task_point
            )));
        }
        Ok(())
    }
}

/// Pooled success rate `ΣS_obs / ΣS_max × 100`.
pub fn success_rate(cards: &[ScoreCard]) -> Result<f64, EvalError> {
    if cards.is_empty() {
        return Err(EvalError::InvalidScoreCard("no trials".into()));
    }
    let mut obs = 0u64;
    let mut max = 0u64;
    for c in cards {
        c.validate()?;
        obs += u64::from(c.s_obs());
        max += u64::from(c.s_max());
    }
    Ok(obs as f64 / max as f64 * 100.0)
}

/// Wilson score interval for `successes` out of `trials` at quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> Result<(f64, f64), EvalError> {
    if trials == 0 || successes > trials {
        return Err(EvalError::InvalidScoreCard(format!("{successes} successes of {trials} trials")));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Ok(((center - half).max(0.0), (center + half).min(1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrSummary {
    pub group: String,
    pub trials: usize,
    pub s_obs: u64,
    pub s_max: u64,
    pub sr_percent: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

/// SR with a 68% Wilson interval over pooled points.
pub fn summarize(group: &str, cards: &[ScoreCard]) -> Result<SrSummary, EvalError> {
    let sr = success_rate(cards)?;
    let s_obs: u64 = cards.iter().map(|c| u64::from(c.s_obs())).sum();
    let s_max: u64 = cards.iter().map(|c| u64::from(c.s_max())).sum();
    let (lo, hi) = wilson_interval(s_obs, s_max, Z_68)?;
    Ok(SrSummary { group: group.to_string(), trials: cards.len(), s_obs, s_max, sr_percent: sr, wilson_low: lo, wilson_high: hi })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn card(a: u32, am: u32, s: u32, sm: u32, t: u32) -> ScoreCard {
        ScoreCard { group: String::new(), atomic_points: a, atomic_max: am, subtask_points: s, subtask_max: sm, task_point: t }
    }

    #[test]
    fn full_marks() {
        assert_eq!(success_rate(&[card(3, 3, 2, 2, 1)]).unwrap(), 100.0);
    }

    #[test]
    fn partial() {
        let sr = success_rate(&[card(3, 3, 1, 2, 0)]).unwrap();
        assert!((sr - 66.666_666_666).abs() < 1e-6);
    }

    #[test]
    fn pooled_not_mean_of_ratios() {
        // 1/2 and 9/10 -> pooled 10/12, mean of ratios would be 0.7
        let cards = [card(1, 1, 0, 0, 0), card(9, 9, 0, 0, 0)];
        let sr = success_rate(&cards).unwrap();
        assert!((sr - 10.0 / 12.0 * 100.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_cards() {
        assert!(success_rate(&[card(4, 3, 0, 0, 0)]).is_err());
        assert!(success_rate(&[card(0, 0, 0, 0, 2)]).is_err());
        assert!(success_rate(&[]).is_err());
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(16, 16, Z_68).unwrap();
        assert!(hi <= 1.0 && lo > 0.9);
        let (lo, hi) = wilson_interval(0, 16, Z_68).unwrap();
        assert!(lo.abs() < 1e-15);
        assert!(hi < 0.1);
        assert!(wilson_interval(3, 0, Z_68).is_err());
    }
}
