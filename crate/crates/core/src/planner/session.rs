//! The propose → reflect → append/backtrack loop.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::guard::{check_atomic, clean_instruction, grounding_issue, redundancy_issue};
use super::{
    parse_scene, BackendError, ChatBackend, ChatMessage, ChatRequest, PlannerError, SceneRecord, ScriptSpec, FEEDBACK_PREFIX,
};
use crate::memory::{Dashboard, DashboardUpdate, EpisodicRecord, EpisodicStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubtaskStatus {
    Proposed,
    Valid,
    Deleted,
    Executing,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtask {
    pub index: usize,
    pub instruction: String,
    pub status: SubtaskStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection_reason: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Valid,
    Invalid,
    SequenceComplete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionVerdict {
    pub decision: Decision,
    pub reason: String,
    /// For invalid verdicts: also drop queued steps from this index on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollback_to: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BacktrackEvent {
    pub iteration: usize,
    pub instruction: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanState {
    pub goal: String,
    pub queue: Vec<Subtask>,
    /// Proposals made so far.
    pub iteration: usize,
    pub backtrack_events: Vec<BacktrackEvent>,
    /// Rejected candidates and rolled-back steps, in the order they left.
    pub deleted: Vec<Subtask>,
}

impl PlanState {
    pub fn new(goal: &str) -> Self {
        Self { goal: goal.to_string(), queue: Vec::new(), iteration: 0, backtrack_events: Vec::new(), deleted: Vec::new() }
    }

    /// Pretty JSON with a trailing newline; field order is fixed.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, PlannerError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| PlannerError::Scene { path: e.path().to_string(), message: format!("plan file: {}", e.inner()) })
    }

    pub fn instructions(&self) -> Vec<String> {
        self.queue.iter().map(|s| s.instruction.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub iteration_cap: usize,
    /// Past sessions injected into each proposal prompt.
    pub retrieval_k: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self { iteration_cap: 64, retrieval_k: 3 }
    }
}

/// Reasoner and reflector scripts for a deterministic planning run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedPlanFixture {
    pub reasoner: ScriptSpec,
    pub reflector: ScriptSpec,
}

impl ScriptedPlanFixture {
    pub fn load(path: &Path) -> Result<Self, PlannerError> {
        let text = std::fs::read_to_string(path).map_err(|source| PlannerError::Io { path: path.to_path_buf(), source })?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| PlannerError::Scene { path: e.path().to_string(), message: e.inner().to_string() })
    }
}

const REASONER_SYSTEM: &str = "You plan robotic chemistry experiments one step at a time. \
Read the goal, the dashboard and the steps queued so far, then reply with exactly one atomic \
imperative instruction for the next step. No numbering, no explanations, one action only.";

const REFLECTOR_SYSTEM: &str = "You review one proposed robot step. Check that it is feasible in the \
described scene, sensible at this point of the experiment and not redundant with queued steps. \
Reply `valid`, `invalid: <reason>`, or `complete` when the queued steps already achieve the goal. \
A JSON object {\"decision\": \"valid|invalid|sequence_complete\", \"reason\": \"...\", \"rollback_to\": <index>} \
is also accepted; rollback_to drops queued steps from that index on.";

const ATOMIC_REMINDER: &str = "Your previous reply was not a single atomic instruction. Reply with one action only.";

/// Reads a reflector reply: a JSON verdict, or a line starting with
/// `valid`, `invalid: <reason>` or `complete`.
pub fn parse_verdict(reply: &str) -> Result<ReflectionVerdict, PlannerError> {
    let text = reply.trim();
    if text.starts_with('{') {
        let v: ReflectionVerdict = serde_json::from_str(text).map_err(|e| BackendError::Malformed(format!("verdict: {e}")))?;
        if v.decision == Decision::Invalid && v.reason.trim().is_empty() {
            return Err(BackendError::Malformed("invalid verdict without a reason".into()).into());
        }
        return Ok(v);
    }
    let first = text.lines().next().unwrap_or("").trim();
    let lower = first.to_lowercase();
    let rest = |n: usize| first[n..].trim_start_matches([':', ' ', '-', '\u{2014}']).trim().to_string();
    if lower.starts_with("invalid") {
        let reason = rest("invalid".len());
        if reason.is_empty() {
            return Err(BackendError::Malformed("invalid verdict without a reason".into()).into());
        }
        return Ok(ReflectionVerdict { decision: Decision::Invalid, reason, rollback_to: None });
    }
    if lower.starts_with("valid") {
        let reason = rest("valid".len());
        return Ok(ReflectionVerdict {
            decision: Decision::Valid,
            reason: if reason.is_empty() { "ok".into() } else { reason },
            rollback_to: None,
        });
    }
    for word in ["sequence_complete", "complete", "done"] {
        if lower.starts_with(word) {
            let reason = rest(word.len());
            return Ok(ReflectionVerdict {
                decision: Decision::SequenceComplete,
                reason: if reason.is_empty() { "sequence complete".into() } else { reason },
                rollback_to: None,
            });
        }
    }
    Err(BackendError::Malformed(format!("unrecognised verdict {first:?}")).into())
}

/// Drops queued steps from `target_index` on, marking them deleted.
pub fn backtrack(state: &PlanState, target_index: usize) -> Result<PlanState, PlannerError> {
    if target_index > state.queue.len() {
        return Err(PlannerError::Argument(format!("backtrack target {target_index} beyond queue of {}", state.queue.len())));
    }
    let mut next = state.clone();
    for mut s in next.queue.drain(target_index..) {
        s.status = SubtaskStatus::Deleted;
        next.deleted.push(s);
    }
    Ok(next)
}

fn sync_dashboard(dashboard: &mut Dashboard, state: &PlanState, phase: &str) -> Result<(), PlannerError> {
    dashboard.update(DashboardUpdate::Phase(phase.into()))?;
    dashboard.update(DashboardUpdate::PendingObjectives(state.instructions()))?;
    Ok(())
}

pub enum SceneSource<'a> {
    Fixture(&'a Path),
    /// A vision endpoint replying with scene JSON or dashboard text.
    Endpoint {
        backend: &'a mut dyn ChatBackend,
        capture_ref: String,
    },
}

/// Loads and validates a scene, then writes it into the dashboard.
pub fn describe_scene(source: SceneSource<'_>, dashboard: &mut Dashboard) -> Result<SceneRecord, PlannerError> {
    let scene = match source {
        SceneSource::Fixture(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| PlannerError::Io { path: path.to_path_buf(), source })?;
            parse_scene(&text)?
        }
        SceneSource::Endpoint { backend, capture_ref } => {
            let request = ChatRequest {
                system: "Mark and enumerate the task-relevant objects on the lab bench. For each give its id, label, \
                         interaction state, affordances (grasp, pour, press, twist, place), position, constraints and \
                         relations, in the [scene] dashboard text format."
                    .into(),
                messages: vec![ChatMessage::user(format!("Image: {capture_ref}"))],
            };
            parse_scene(&backend.complete(&request)?)?
        }
    };
    dashboard.update(DashboardUpdate::Scene(scene.clone()))?;
    Ok(scene)
}

pub struct Planner<'a> {
    pub reasoner: &'a mut dyn ChatBackend,
    pub reflector: &'a mut dyn ChatBackend,
    pub config: PlannerConfig,
}

impl<'a> Planner<'a> {
    pub fn new(reasoner: &'a mut dyn ChatBackend, reflector: &'a mut dyn ChatBackend, config: PlannerConfig) -> Self {
        Self { reasoner, reflector, config }
    }

    fn context(state: &PlanState, dashboard: &Dashboard) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Goal: {}", state.goal);
        let _ = writeln!(out, "Dashboard: {}", serde_json::to_string(dashboard).expect("dashboard serializes"));
        out.push_str("Queued steps:");
        if state.queue.is_empty() {
            out.push_str(" none");
        }
        for s in &state.queue {
            let _ = write!(out, "\n  [{}] {}", s.index, s.instruction);
        }
        out.push('\n');
        out
    }

    /// Asks the reasoner for one step. A non-atomic reply is re-prompted
    /// once before giving up.
    pub fn propose_next_subtask(
        &mut self,
        state: &PlanState,
        dashboard: &Dashboard,
        feedback: Option<&str>,
        retrieved: &[EpisodicRecord],
    ) -> Result<Subtask, PlannerError> {
        let mut prompt = Self::context(state, dashboard);
        if !retrieved.is_empty() {
            prompt.push_str("Similar past sessions:\n");
            for r in retrieved {
                let _ = writeln!(prompt, "  {} -> {}", r.instruction, r.final_plan.join(" | "));
            }
        }
        if let Some(f) = feedback {
            let _ = writeln!(prompt, "{FEEDBACK_PREFIX}{f}");
        }
        let mut request = ChatRequest { system: REASONER_SYSTEM.into(), messages: vec![ChatMessage::user(prompt)] };
        let mut reply = self.reasoner.complete(&request)?;
        for attempt in 0..2 {
            let instruction = clean_instruction(&reply);
            if instruction.is_empty() {
                return Err(PlannerError::EmptyOutput);
            }
            match check_atomic(&instruction) {
                Ok(()) => {
                    return Ok(Subtask {
                        index: state.queue.len(),
                        instruction,
                        status: SubtaskStatus::Proposed,
                        rejection_reason: None,
                    })
                }
                Err(why) if attempt == 0 => {
                    log::info!("re-prompting after non-atomic reply ({why}): {instruction:?}");
                    request.messages.push(ChatMessage::assistant(reply.clone()));
                    request.messages.push(ChatMessage::user(ATOMIC_REMINDER));
                    reply = self.reasoner.complete(&request)?;
                }
                Err(why) => return Err(PlannerError::NotAtomic(format!("{why}: {instruction:?}"))),
            }
        }
        unreachable!("the loop returns on its second pass")
    }

    /// Built-in redundancy and grounding checks first; the reflector is
    /// consulted only if both pass.
    pub fn reflect(
        &mut self,
        candidate: &Subtask,
        state: &PlanState,
        dashboard: &Dashboard,
    ) -> Result<ReflectionVerdict, PlannerError> {
        if candidate.status != SubtaskStatus::Proposed {
            return Err(PlannerError::Argument(format!("candidate {:?} is not in proposed state", candidate.instruction)));
        }
        if let Some(reason) = redundancy_issue(&candidate.instruction, &state.queue) {
            return Ok(ReflectionVerdict { decision: Decision::Invalid, reason, rollback_to: None });
        }
        if let Some(scene) = &dashboard.scene {
            if let Some(reason) = grounding_issue(&candidate.instruction, scene) {
                return Ok(ReflectionVerdict { decision: Decision::Invalid, reason, rollback_to: None });
            }
        }
        let mut prompt = Self::context(state, dashboard);
        let _ = writeln!(prompt, "Candidate: {}", candidate.instruction);
        let request = ChatRequest { system: REFLECTOR_SYSTEM.into(), messages: vec![ChatMessage::user(prompt)] };
        let reply = self.reflector.complete(&request)?;
        if reply.trim().is_empty() {
            return Err(PlannerError::EmptyOutput);
        }
        parse_verdict(&reply)
    }

    pub fn plan_loop(
        &mut self,
        goal: &str,
        dashboard: &mut Dashboard,
        memory: Option<&EpisodicStore>,
    ) -> Result<PlanState, PlannerError> {
        if dashboard.scene.is_none() {
            return Err(PlannerError::Argument("dashboard has no scene; describe the scene first".into()));
        }
        let retrieved: Vec<EpisodicRecord> = match memory {
            Some(store) if self.config.retrieval_k > 0 => store
                .retrieve(goal, self.config.retrieval_k)
                .into_iter()
                .filter(|r| r.similarity > 0.0)
                .map(|r| r.record)
                .collect(),
            _ => Vec::new(),
        };
        let mut state = PlanState::new(goal);
        sync_dashboard(dashboard, &state, "planning")?;
        let mut feedback: Option<String> = None;
        while state.iteration < self.config.iteration_cap {
            state.iteration += 1;
            let mut candidate = self.propose_next_subtask(&state, dashboard, feedback.as_deref(), &retrieved)?;
            let verdict = self.reflect(&candidate, &state, dashboard)?;
            match verdict.decision {
                Decision::Valid => {
                    candidate.status = SubtaskStatus::Valid;
                    state.queue.push(candidate);
                    feedback = None;
                }
                Decision::Invalid => {
                    state.backtrack_events.push(BacktrackEvent {
                        iteration: state.iteration,
                        instruction: candidate.instruction.clone(),
                        reason: verdict.reason.clone(),
                    });
                    candidate.status = SubtaskStatus::Deleted;
                    candidate.rejection_reason = Some(verdict.reason.clone());
                    state.deleted.push(candidate);
                    if let Some(target) = verdict.rollback_to.filter(|t| *t < state.queue.len()) {
                        state = backtrack(&state, target)?;
                    }
                    feedback = Some(verdict.reason);
                }
                Decision::SequenceComplete => {
                    sync_dashboard(dashboard, &state, "planned")?;
                    return Ok(state);
                }
            }
            sync_dashboard(dashboard, &state, "planning")?;
        }
        Err(PlannerError::IterationCap { cap: self.config.iteration_cap, partial: Box::new(state) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::ScriptedBackend;

    const SCENE: &str = r#"{"items":[
        {"id":1,"label":"reagent bottle","interaction_state":["closed"],"affordances":["grasp","pour","twist"],"position":"left"},
        {"id":2,"label":"beaker","affordances":["grasp","pour"],"position":"center"},
        {"id":3,"label":"glass rod","affordances":["grasp"],"position":"right"}],
      "capture_ref":"fixtures/bench.png","timestamp":0}"#;

    fn dashboard() -> Dashboard {
        let mut d = Dashboard::default();
        d.update(DashboardUpdate::Scene(SceneRecord::from_json(SCENE).unwrap())).unwrap();
        d
    }

    fn run(reasoner: &mut ScriptedBackend, reflector: &mut ScriptedBackend, cap: usize) -> Result<PlanState, PlannerError> {
        let mut d = dashboard();
        Planner::new(reasoner, reflector, PlannerConfig { iteration_cap: cap, retrieval_k: 3 }).plan_loop("prepare", &mut d, None)
    }

    #[test]
    fn first_proposal_echoes_script() {
        let mut r = ScriptedBackend::new(["open bottle", "pour 5 mL", "stir"]);
        let mut f = ScriptedBackend::new(Vec::<String>::new());
        let mut p = Planner::new(&mut r, &mut f, PlannerConfig::default());
        let s = p.propose_next_subtask(&PlanState::new("g"), &dashboard(), None, &[]).unwrap();
        assert_eq!(
            s,
            Subtask { index: 0, instruction: "open bottle".into(), status: SubtaskStatus::Proposed, rejection_reason: None }
        );
    }

    #[test]
    fn non_atomic_twice_is_an_error() {
        let mut r = ScriptedBackend::new(["1. open bottle 2. pour", "1. open bottle 2. pour", "open bottle"]);
        let mut f = ScriptedBackend::new(Vec::<String>::new());
        let mut p = Planner::new(&mut r, &mut f, PlannerConfig::default());
        assert!(matches!(p.propose_next_subtask(&PlanState::new("g"), &dashboard(), None, &[]), Err(PlannerError::NotAtomic(_))));
        let mut r = ScriptedBackend::new(["open bottle and pour it", "open bottle"]);
        let mut p = Planner::new(&mut r, &mut f, PlannerConfig::default());
        assert_eq!(p.propose_next_subtask(&PlanState::new("g"), &dashboard(), None, &[]).unwrap().instruction, "open bottle");
    }

    #[test]
    fn empty_reply_is_an_error() {
        let mut r = ScriptedBackend::new(["  "]);
        let mut f = ScriptedBackend::new(Vec::<String>::new());
        let mut p = Planner::new(&mut r, &mut f, PlannerConfig::default());
        assert!(matches!(p.propose_next_subtask(&PlanState::new("g"), &dashboard(), None, &[]), Err(PlannerError::EmptyOutput)));
    }

    #[test]
    fn hand_traced_rejection() {
        // A, B, C (rejected by the reflector), D, then completion.
        let mut r = ScriptedBackend::new([
            "open the reagent bottle",
            "pour 5 mL into the beaker",
            "heat the beaker",
            "stir with the glass rod",
            "done?",
        ]);
        let mut f = ScriptedBackend::new(["valid", "valid", "invalid: no heat source on the bench", "valid", "complete"]);
        let state = run(&mut r, &mut f, 64).unwrap();
        assert_eq!(state.instructions(), vec!["open the reagent bottle", "pour 5 mL into the beaker", "stir with the glass rod"]);
        assert_eq!(state.backtrack_events.len(), 1);
        assert_eq!(state.backtrack_events[0].iteration, 3);
        assert_eq!(state.iteration, 5);
        assert_eq!(state.queue.iter().map(|s| s.index).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(r.feedback_log[3].as_deref(), Some("no heat source on the bench"));
        assert_eq!(r.feedback_log.iter().filter(|f| f.is_some()).count(), 1);
    }

    #[test]
    fn immediate_completion() {
        let mut r = ScriptedBackend::new(["anything"]);
        let mut f = ScriptedBackend::new(["complete"]);
        let state = run(&mut r, &mut f, 64).unwrap();
        assert!(state.queue.is_empty() && state.backtrack_events.is_empty());
        assert_eq!(state.iteration, 1);
    }

    #[test]
    fn only_invalid_hits_cap() {
        let mut r = ScriptedBackend::from_spec(&ScriptSpec {
            replies: vec!["read the thermometer".into()],
            repeat_last: true,
            ..Default::default()
        });
        let mut f = ScriptedBackend::new(Vec::<String>::new());
        match run(&mut r, &mut f, 64) {
            Err(PlannerError::IterationCap { cap, partial }) => {
                assert_eq!(cap, 64);
                assert!(partial.queue.is_empty());
                assert_eq!(partial.backtrack_events.len(), 64);
                assert_eq!(partial.iteration, 64);
            }
            other => panic!("{other:?}"),
        }
        // Grounding rejections never reach the reflector.
        assert!(f.requests.is_empty());
    }

    #[test]
    fn redundant_candidate_feeds_back_and_alternate_replaces_it() {
        let mut r = ScriptedBackend::from_spec(&ScriptSpec {
            replies: vec!["open the reagent bottle".into(), "open the reagent bottle".into(), "x".into()],
            alternates: vec!["pour 5 mL into the beaker".into()],
            repeat_last: false,
        });
        let mut f = ScriptedBackend::new(["valid", "valid", "complete"]);
        let state = run(&mut r, &mut f, 64).unwrap();
        assert_eq!(state.instructions(), vec!["open the reagent bottle", "pour 5 mL into the beaker"]);
        assert!(state.backtrack_events[0].reason.contains("redundan"));
        assert!(r.feedback_log[2].as_deref().unwrap().contains("redundan"));
    }

    #[test]
    fn reflector_rollback_drops_suffix() {
        let mut r = ScriptedBackend::new([
            "open the reagent bottle",
            "pour 5 mL into the beaker",
            "stir with the glass rod",
            "grasp the beaker",
            "y",
        ]);
        let mut f = ScriptedBackend::new([
            "valid",
            "valid",
            r#"{"decision":"invalid","reason":"pour before opening","rollback_to":1}"#,
            "valid",
            "complete",
        ]);
        let state = run(&mut r, &mut f, 64).unwrap();
        assert_eq!(state.instructions(), vec!["open the reagent bottle", "grasp the beaker"]);
        assert_eq!(state.deleted.len(), 2);
        assert_eq!(state.deleted[1].instruction, "pour 5 mL into the beaker");
        assert_eq!(state.deleted[1].status, SubtaskStatus::Deleted);
    }

    fn three() -> PlanState {
        let mut s = PlanState::new("g");
        for (i, x) in ["A", "B", "C"].iter().enumerate() {
            s.queue.push(Subtask { index: i, instruction: x.to_string(), status: SubtaskStatus::Valid, rejection_reason: None });
        }
        s
    }

    #[test]
    fn backtrack_semantics() {
        let s = three();
        let b = backtrack(&s, 1).unwrap();
        assert_eq!(b.instructions(), vec!["A"]);
        assert_eq!(b.deleted.iter().map(|d| d.instruction.as_str()).collect::<Vec<_>>(), vec!["B", "C"]);
        assert!(b.deleted.iter().all(|d| d.status == SubtaskStatus::Deleted));
        assert_eq!(backtrack(&s, 3).unwrap(), s);
        let z = backtrack(&s, 0).unwrap();
        assert!(z.queue.is_empty());
        assert_eq!(z.deleted.len(), 3);
        assert!(matches!(backtrack(&s, 4), Err(PlannerError::Argument(_))));
    }

    #[test]
    fn verdict_forms() {
        assert_eq!(parse_verdict("Valid.").unwrap().decision, Decision::Valid);
        assert_eq!(parse_verdict("invalid: duplicates step 1").unwrap().reason, "duplicates step 1");
        assert!(parse_verdict("invalid").is_err());
        assert_eq!(parse_verdict("sequence_complete").unwrap().decision, Decision::SequenceComplete);
        assert!(parse_verdict("maybe").is_err());
    }

    #[test]
    fn replay_is_byte_identical() {
        let go = || {
            let mut r = ScriptedBackend::new(["open the reagent bottle", "heat the beaker", "stir with the glass rod", "z"]);
            let mut f = ScriptedBackend::new(["valid", "invalid: no heat source", "valid", "complete"]);
            run(&mut r, &mut f, 64).unwrap().to_json()
        };
        assert_eq!(go(), go());
    }

    #[test]
    fn dashboard_tracks_queue() {
        let mut r = ScriptedBackend::new(["open the reagent bottle", "z"]);
        let mut f = ScriptedBackend::new(["valid", "complete"]);
        let mut d = dashboard();
        Planner::new(&mut r, &mut f, PlannerConfig::default()).plan_loop("g", &mut d, None).unwrap();
        assert_eq!(d.task_state.phase, "planned");
        assert_eq!(d.task_state.pending_objectives, vec!["open the reagent bottle"]);
    }

    #[test]
    fn retrieved_sessions_reach_the_prompt() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = EpisodicStore::open(dir.path()).unwrap();
        let rec = EpisodicRecord {
            session_id: String::new(),
            timestamp: 1,
            instruction: "prepare the beaker".into(),
            category: None,
            dialogue: vec![crate::memory::DialogueTurn { role: "user".into(), text: "go".into() }],
            final_plan: vec!["grasp the beaker".into()],
            outcome: crate::memory::Outcome::Success,
        };
        store.store(rec).unwrap();
        let mut r = ScriptedBackend::new(["z"]);
        let mut f = ScriptedBackend::new(["complete"]);
        let mut d = dashboard();
        Planner::new(&mut r, &mut f, PlannerConfig::default()).plan_loop("prepare the beaker", &mut d, Some(&store)).unwrap();
        assert!(r.requests[0].messages[0].content.contains("prepare the beaker -> grasp the beaker"));
    }
}
