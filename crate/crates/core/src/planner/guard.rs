//! Lexical checks that run without a backend: atomicity of a proposed
//! instruction, redundancy against the queue, and grounding in the scene.

use std::sync::OnceLock;

use regex::Regex;

use super::{SceneRecord, Subtask};
use crate::text::{lab_terms_in, tokenize, EQUIPMENT_TERMS};

/// Verbs that open an imperative clause.
const IMPERATIVE_VERBS: &[&str] = &[
    "add",
    "adjust",
    "approach",
    "attach",
    "cap",
    "carry",
    "check",
    "clamp",
    "close",
    "cover",
    "detach",
    "dip",
    "drop",
    "empty",
    "extinguish",
    "fill",
    "grasp",
    "grab",
    "heat",
    "hold",
    "ignite",
    "insert",
    "lift",
    "light",
    "lower",
    "measure",
    "mix",
    "move",
    "open",
    "pick",
    "place",
    "position",
    "pour",
    "press",
    "pull",
    "push",
    "put",
    "raise",
    "release",
    "remove",
    "return",
    "rinse",
    "rotate",
    "screw",
    "set",
    "shake",
    "stir",
    "swirl",
    "take",
    "tilt",
    "transfer",
    "turn",
    "twist",
    "uncap",
    "unscrew",
    "wait",
    "weigh",
    "wipe",
];

fn numbering() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)(^|\s)(\d+[.)]|step\s+\d+\s*[:.)-]|[-*•])\s").expect("valid regex"))
}

fn clause_split() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\s*(;|,?\s+and then\s+|,?\s+then\s+|,?\s+after that,?\s+|,?\s+and\s+|,\s+)").expect("valid regex")
    })
}

/// Strips wrapping quotes and a trailing period.
pub fn clean_instruction(raw: &str) -> String {
    let t = raw.trim().trim_matches(|c| c == '"' || c == '\'' || c == '`').trim();
    t.strip_suffix('.').unwrap_or(t).trim().to_string()
}

/// `Err(reason)` if `text` numbers steps, spans lines, or holds more than
/// one imperative clause.
pub fn check_atomic(text: &str) -> Result<(), String> {
    if text.lines().filter(|l| !l.trim().is_empty()).count() > 1 {
        return Err("reply spans several lines".into());
    }
    if numbering().is_match(text) {
        return Err("reply numbers or lists steps".into());
    }
    let clauses = clause_split()
        .split(text)
        .filter(|c| tokenize(c).first().is_some_and(|w| IMPERATIVE_VERBS.contains(&w.as_str())))
        .count();
    if clauses > 1 {
        return Err(format!("reply holds {clauses} imperative clauses"));
    }
    Ok(())
}

/// Reason if `candidate` repeats a queued instruction token for token.
pub fn redundancy_issue(candidate: &str, queue: &[Subtask]) -> Option<String> {
    let c = tokenize(candidate);
    queue.iter().find(|s| tokenize(&s.instruction) == c).map(|s| format!("redundant with step {} ({:?})", s.index, s.instruction))
}

fn ids_referenced() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)(?:#|\b(?:item|object|mark)\s+)(\d+)\b").expect("valid regex"))
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Reason if `candidate` names a mark id or an equipment term that no scene
/// item carries. Reagents are not checked: they sit inside containers.
pub fn grounding_issue(candidate: &str, scene: &SceneRecord) -> Option<String> {
    for cap in ids_referenced().captures_iter(candidate) {
        let id: Option<u32> = cap[1].parse().ok();
        if id.is_none_or(|id| scene.item(id).is_none()) {
            return Some(format!("infeasible: no item #{} in the scene", &cap[1]));
        }
    }
    let labels: Vec<Vec<String>> = scene.items.iter().map(|i| tokenize(&i.label)).collect();
    for term in lab_terms_in(candidate) {
        if !EQUIPMENT_TERMS.contains(&term) {
            continue;
        }
        let t = tokenize(term);
        if !labels.iter().any(|l| contains_run(l, &t) || contains_run(&t, l)) {
            return Some(format!("infeasible: no {term} in the scene"));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{SceneRecord, SubtaskStatus};

    #[test]
    fn atomic_single_clauses_pass() {
        for ok in ["open bottle", "pour 5 mL", "stir", "grasp the bottle and the beaker", "pour 2.5 mL of water into the beaker"]
        {
            assert!(check_atomic(ok).is_ok(), "{ok}");
        }
    }

    #[test]
    fn numbered_or_compound_replies_fail() {
        for bad in [
            "1. open bottle 2. pour",
            "open bottle; pour it",
            "open the bottle and pour 5 mL",
            "grasp the flask, then shake it",
            "- open bottle",
            "open bottle\npour",
            "Step 1: open the bottle",
        ] {
            assert!(check_atomic(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn cleaning() {
        assert_eq!(clean_instruction("  \"Open the bottle.\" "), "Open the bottle");
    }

    fn scene() -> SceneRecord {
        SceneRecord::from_json(
            r#"{"items":[
                {"id":1,"label":"reagent bottle","affordances":["grasp","pour"],"position":"left"},
                {"id":2,"label":"beaker","affordances":["grasp"],"position":"center"}],
              "capture_ref":"x","timestamp":0}"#,
        )
        .unwrap()
    }

    #[test]
    fn grounding() {
        let s = scene();
        assert!(grounding_issue("open the bottle", &s).is_none());
        assert!(grounding_issue("pour hcl from the reagent bottle into #2", &s).is_none());
        assert!(grounding_issue("place the beaker on the tray", &s).unwrap().contains("tray"));
        assert!(grounding_issue("grasp item 7", &s).unwrap().contains("#7"));
    }

    #[test]
    fn redundancy_ignores_case_and_punctuation() {
        let q = vec![Subtask {
            index: 0,
            instruction: "Open the bottle".into(),
            status: SubtaskStatus::Valid,
            rejection_reason: None,
        }];
        assert!(redundancy_issue("open the bottle.", &q).unwrap().contains("redundan"));
        assert!(redundancy_issue("close the bottle", &q).is_none());
    }
}
