//! Catalogue of atomic arm skills and the task categories built from them.
//!
//! Each skill is a named move to an absolute joint target (plus gripper).
//! The catalogue doubles as the instruction vocabulary of the policy: a
//! skill's position is its instruction id.

use serde::{Deserialize, Serialize};

use crate::executor::{RobotLimits, ACTION_DIM};
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillSpec {
    pub label: String,
    pub instruction: String,
    /// Joint targets then gripper (0 open, 1 closed).
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub category: String,
    pub description: String,
    /// Skill labels in execution order.
    pub subtasks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillLibrary {
    pub home: Vec<f64>,
    pub skills: Vec<SkillSpec>,
    pub tasks: Vec<TaskSpec>,
}

#[derive(Debug, thiserror::Error)]
#[error("skill library error: {0}")]
pub struct SkillError(pub String);

fn skill(label: &str, instruction: &str, target: [f64; ACTION_DIM]) -> SkillSpec {
    SkillSpec { label: label.into(), instruction: instruction.into(), target: target.to_vec() }
}

fn task(category: &str, description: &str, subtasks: &[&str]) -> TaskSpec {
    TaskSpec {
        category: category.into(),
        description: description.into(),
        subtasks: subtasks.iter().map(|s| s.to_string()).collect(),
    }
}

impl Default for SkillLibrary {
    fn default() -> Self {
        let skills = vec![
            skill("approach_bottle", "move above the reagent bottle", [0.45, -1.05, 1.05, -1.55, -1.57, 0.0, 0.0]),
            skill("grasp_bottle", "grasp the reagent bottle", [0.45, -0.80, 1.30, -2.05, -1.57, 0.0, 1.0]),
            skill("open_bottle", "open the reagent bottle", [0.45, -0.80, 1.30, -2.05, -1.57, 1.20, 1.0]),
            skill("lift_bottle", "lift the reagent bottle", [0.45, -1.20, 1.00, -1.40, -1.57, 0.0, 1.0]),
            skill("pour_reagent", "pour the reagent into the beaker", [0.95, -1.05, 1.05, -1.50, -1.57, 1.10, 1.0]),
            skill("place_bottle", "place the bottle back on the rack", [0.45, -0.80, 1.30, -2.05, -1.57, 0.0, 0.0]),
            skill("stir_beaker", "stir the beaker with the glass rod", [0.95, -0.90, 1.25, -1.90, -1.57, 0.80, 1.0]),
            skill("approach_stirrer", "move to the magnetic stirrer", [-0.50, -1.10, 1.20, -1.65, -1.57, 0.0, 0.0]),
            skill("press_button", "press the stirrer power button", [-0.50, -0.85, 1.40, -2.10, -1.57, 0.0, 0.0]),
            skill("approach_flask", "move above the flask", [0.10, -1.00, 0.95, -1.50, -1.57, 0.0, 0.0]),
            skill("grasp_flask", "grasp the flask neck", [0.10, -0.75, 1.25, -2.05, -1.57, 0.0, 1.0]),
            skill("shake_flask", "shake the flask gently", [0.10, -1.15, 1.05, -1.45, -1.57, 0.60, 1.0]),
            skill("release_flask", "set the flask down and release it", [0.10, -0.75, 1.25, -2.05, -1.57, 0.0, 0.0]),
            skill("return_home", "return to the home pose", [0.0, -1.20, 1.20, -1.57, -1.57, 0.0, 0.0]),
        ];
        let tasks = vec![
            task(
                "liquid_transfer",
                "transfer reagent from the bottle into the beaker",
                &["approach_bottle", "grasp_bottle", "lift_bottle", "pour_reagent", "place_bottle", "return_home"],
            ),
            task("stirrer_operation", "switch on the magnetic stirrer", &["approach_stirrer", "press_button", "return_home"]),
            task(
                "flask_mixing",
                "mix the solution in the flask",
                &["approach_flask", "grasp_flask", "shake_flask", "release_flask", "return_home"],
            ),
            task("beaker_stirring", "stir the solution in the beaker", &["stir_beaker", "return_home"]),
            task(
                "bottle_relocation",
                "pick up the reagent bottle and put it back",
                &["approach_bottle", "grasp_bottle", "lift_bottle", "place_bottle", "return_home"],
            ),
        ];
        Self { home: vec![0.0, -1.20, 1.20, -1.57, -1.57, 0.0, 0.0], skills, tasks }
    }
}

impl SkillLibrary {
    pub fn validate(&self, limits: &RobotLimits) -> Result<(), SkillError> {
        if self.skills.is_empty() {
            return Err(SkillError("no skills".into()));
        }
        if !limits.contains(&self.home) {
            return Err(SkillError("home pose violates the joint limits".into()));
        }
        for (i, s) in self.skills.iter().enumerate() {
            if self.skills[..i].iter().any(|o| o.label == s.label) {
                return Err(SkillError(format!("duplicate skill {}", s.label)));
            }
            if !limits.contains(&s.target) {
                return Err(SkillError(format!("skill {} target is outside the joint limits", s.label)));
            }
        }
        for t in &self.tasks {
            if t.subtasks.is_empty() {
                return Err(SkillError(format!("task {} has no subtasks", t.category)));
            }
            if let Some(missing) = t.subtasks.iter().find(|l| self.index_of(l).is_none()) {
                return Err(SkillError(format!("task {} uses unknown skill {missing}", t.category)));
            }
        }
        Ok(())
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.skills.iter().position(|s| s.label == label)
    }

    pub fn get(&self, label: &str) -> Option<&SkillSpec> {
        self.skills.iter().find(|s| s.label == label)
    }

    pub fn task(&self, category: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.category == category)
    }

    pub fn instructions(&self) -> Vec<String> {
        self.skills.iter().map(|s| s.instruction.clone()).collect()
    }

    /// Best skill for free-form text: exact label or instruction first, then
    /// the largest token overlap (Jaccard) above 0.3.
    pub fn resolve(&self, text: &str) -> Option<(usize, &SkillSpec)> {
        let norm = text.trim().to_lowercase();
        if let Some(i) = self.skills.iter().position(|s| s.label == norm || s.instruction == norm) {
            return Some((i, &self.skills[i]));
        }
        let query: std::collections::BTreeSet<String> = tokenize(text).into_iter().collect();
        let mut best: Option<(usize, f64)> = None;
        for (i, s) in self.skills.iter().enumerate() {
            let cand: std::collections::BTreeSet<String> =
                tokenize(&s.instruction).into_iter().chain(tokenize(&s.label.replace('_', " "))).collect();
            let inter = query.intersection(&cand).count() as f64;
            let union = query.union(&cand).count() as f64;
            let score = if union > 0.0 { inter / union } else { 0.0 };
            if score >= 0.3 && best.is_none_or(|(_, b)| score > b) {
                best = Some((i, score));
            }
        }
        best.map(|(i, _)| (i, &self.skills[i]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_library_is_consistent() {
        SkillLibrary::default().validate(&RobotLimits::default()).unwrap();
    }

    #[test]
    fn resolves_by_label_and_paraphrase() {
        let lib = SkillLibrary::default();
        assert_eq!(lib.resolve("grasp_bottle").unwrap().1.label, "grasp_bottle");
        assert_eq!(lib.resolve("Press the power button of the stirrer").unwrap().1.label, "press_button");
        assert!(lib.resolve("calibrate the spectrometer").is_none());
    }

    #[test]
    fn unknown_task_skill_is_reported() {
        let mut lib = SkillLibrary::default();
        lib.tasks[0].subtasks.push("juggle".into());
        let err = lib.validate(&RobotLimits::default()).unwrap_err();
        assert!(err.0.contains("juggle"));
    }
}
