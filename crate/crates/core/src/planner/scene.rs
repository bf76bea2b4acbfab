//! Structured scene records: the JSON fixture schema, validation with field
//! paths, and a line-oriented dashboard text form that vision endpoints can
//! emit and that round-trips through `render_scene_text`.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::PlannerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemState {
    Open,
    Closed,
    Occluded,
    Visible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Affordance {
    Grasp,
    Pour,
    Press,
    Twist,
    Place,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Position {
    Point([f64; 2]),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub verb: String,
    pub target: u32,
}

fn yes() -> bool {
    true
}

fn is_true(v: &bool) -> bool {
    *v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneItem {
    pub id: u32,
    pub label: String,
    #[serde(default)]
    pub interaction_state: BTreeSet<ItemState>,
    #[serde(default)]
    pub affordances: BTreeSet<Affordance>,
    pub position: Position,
    #[serde(default)]
    pub constraints: Vec<String>,
    #[serde(default)]
    pub relations: Vec<Relation>,
    /// Background items (tables, walls) may carry no affordances.
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub task_relevant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneRecord {
    pub items: Vec<SceneItem>,
    pub capture_ref: String,
    pub timestamp: u64,
}

impl SceneRecord {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let bad = |path: String, message: &str| Err(PlannerError::Scene { path, message: message.to_string() });
        let mut seen = HashSet::new();
        for (k, item) in self.items.iter().enumerate() {
            if item.id < 1 {
                return bad(format!("items[{k}].id"), "ids start at 1");
            }
            if !seen.insert(item.id) {
                return bad(format!("items[{k}].id"), &format!("duplicate id {}", item.id));
            }
            if item.label.trim().is_empty() {
                return bad(format!("items[{k}].label"), "label is empty");
            }
            if item.task_relevant && item.affordances.is_empty() {
                return bad(format!("items[{k}].affordances"), "task-relevant item has no affordances");
            }
            let contradictory = (item.interaction_state.contains(&ItemState::Open)
                && item.interaction_state.contains(&ItemState::Closed))
                || (item.interaction_state.contains(&ItemState::Occluded)
                    && item.interaction_state.contains(&ItemState::Visible));
            if contradictory {
                return bad(format!("items[{k}].interaction_state"), "contradictory states");
            }
        }
        for (k, item) in self.items.iter().enumerate() {
            for (r, rel) in item.relations.iter().enumerate() {
                if !seen.contains(&rel.target) {
                    return bad(format!("items[{k}].relations[{r}].target"), &format!("no item with id {}", rel.target));
                }
            }
        }
        Ok(())
    }

    pub fn item(&self, id: u32) -> Option<&SceneItem> {
        self.items.iter().find(|i| i.id == id)
    }

    /// Parses and validates the JSON fixture form.
    pub fn from_json(text: &str) -> Result<Self, PlannerError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let record: SceneRecord = serde_path_to_error::deserialize(de)
            .map_err(|e| PlannerError::Scene { path: e.path().to_string(), message: e.inner().to_string() })?;
        record.validate()?;
        Ok(record)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }
}

fn state_name(s: ItemState) -> &'static str {
    match s {
        ItemState::Open => "open",
        ItemState::Closed => "closed",
        ItemState::Occluded => "occluded",
        ItemState::Visible => "visible",
    }
}

fn affordance_name(a: Affordance) -> &'static str {
    match a {
        Affordance::Grasp => "grasp",
        Affordance::Pour => "pour",
        Affordance::Press => "press",
        Affordance::Twist => "twist",
        Affordance::Place => "place",
    }
}

/// Dashboard text form:
///
/// ```text
/// [scene]
/// capture_ref: bench/0001.png
/// timestamp: 12
/// #1 beaker
///   state: open, visible
///   affordances: grasp, pour
///   position: (0.42, 0.10)
///   constraints: fragile
///   relations: left_of #2
/// ```
pub fn render_scene_text(scene: &SceneRecord) -> String {
    let mut out = String::from("[scene]\n");
    let _ = writeln!(out, "capture_ref: {}", scene.capture_ref);
    let _ = writeln!(out, "timestamp: {}", scene.timestamp);
    for item in &scene.items {
        let _ = writeln!(out, "#{} {}", item.id, item.label);
        if !item.task_relevant {
            out.push_str("  background: yes\n");
        }
        if !item.interaction_state.is_empty() {
            let v: Vec<_> = item.interaction_state.iter().map(|s| state_name(*s)).collect();
            let _ = writeln!(out, "  state: {}", v.join(", "));
        }
        if !item.affordances.is_empty() {
            let v: Vec<_> = item.affordances.iter().map(|a| affordance_name(*a)).collect();
            let _ = writeln!(out, "  affordances: {}", v.join(", "));
        }
        match &item.position {
            Position::Point([x, y]) => {
                let _ = writeln!(out, "  position: ({x}, {y})");
            }
            Position::Text(t) => {
                let _ = writeln!(out, "  position: {t}");
            }
        }
        for c in &item.constraints {
            let _ = writeln!(out, "  constraints: {c}");
        }
        if !item.relations.is_empty() {
            let v: Vec<_> = item.relations.iter().map(|r| format!("{} #{}", r.verb, r.target)).collect();
            let _ = writeln!(out, "  relations: {}", v.join(", "));
        }
    }
    out
}

fn parse_enum<T: for<'de> Deserialize<'de>>(word: &str) -> Option<T> {
    serde_json::from_value(serde_json::Value::String(word.trim().to_lowercase())).ok()
}

fn parse_point(text: &str) -> Option<[f64; 2]> {
    let inner = text.trim().strip_prefix('(')?.strip_suffix(')')?;
    let (x, y) = inner.split_once(',')?;
    Some([x.trim().parse().ok()?, y.trim().parse().ok()?])
}

/// Parses the dashboard text form. Lines outside the `[scene]` section and
/// blank lines are ignored; errors carry the item path and line number.
pub fn parse_scene_text(text: &str) -> Result<SceneRecord, PlannerError> {
    let mut capture_ref = None;
    let mut timestamp = None;
    let mut items: Vec<SceneItem> = Vec::new();
    let mut in_scene = false;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        let fail = |path: String, message: String| PlannerError::Scene { path, message: format!("line {}: {message}", n + 1) };
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with('[') {
            in_scene = line.trim() == "[scene]";
            continue;
        }
        if !in_scene {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let (id, label) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
            let k = items.len();
            let id = id.parse().map_err(|_| fail(format!("items[{k}].id"), format!("bad id {id:?}")))?;
            items.push(SceneItem {
                id,
                label: label.trim().to_string(),
                interaction_state: BTreeSet::new(),
                affordances: BTreeSet::new(),
                position: Position::Text(String::new()),
                constraints: Vec::new(),
                relations: Vec::new(),
                task_relevant: true,
            });
            continue;
        }
        let (key, value) =
            line.trim().split_once(':').ok_or_else(|| fail(String::new(), format!("expected `key: value`, got {line:?}")))?;
        let value = value.trim();
        if !raw.starts_with(char::is_whitespace) {
            match key {
                "capture_ref" => capture_ref = Some(value.to_string()),
                "timestamp" => {
                    timestamp = Some(value.parse().map_err(|_| fail("timestamp".into(), format!("bad timestamp {value:?}")))?)
                }
                _ => return Err(fail(key.to_string(), "unknown scene field".into())),
            }
            continue;
        }
        let k = items.len().checked_sub(1).ok_or_else(|| fail(key.to_string(), "item field before any `#id` line".into()))?;
        let item = &mut items[k];
        let list = || value.split(',').map(str::trim).filter(|s| !s.is_empty());
        match key {
            "state" => {
                for (j, w) in list().enumerate() {
                    let s = parse_enum(w)
                        .ok_or_else(|| fail(format!("items[{k}].interaction_state[{j}]"), format!("unknown state {w:?}")))?;
                    item.interaction_state.insert(s);
                }
            }
            "affordances" => {
                for (j, w) in list().enumerate() {
                    let a = parse_enum(w)
                        .ok_or_else(|| fail(format!("items[{k}].affordances[{j}]"), format!("unknown affordance {w:?}")))?;
                    item.affordances.insert(a);
                }
            }
            "position" => item.position = parse_point(value).map_or_else(|| Position::Text(value.to_string()), Position::Point),
            "constraints" => item.constraints.push(value.to_string()),
            "relations" => {
                for (j, w) in list().enumerate() {
                    let path = format!("items[{k}].relations[{j}]");
                    let (verb, target) =
                        w.rsplit_once(" #").ok_or_else(|| fail(path.clone(), format!("expected `verb #id`, got {w:?}")))?;
                    let target = target.parse().map_err(|_| fail(path, format!("bad target in {w:?}")))?;
                    item.relations.push(Relation { verb: verb.trim().to_string(), target });
                }
            }
            "background" => item.task_relevant = !matches!(value, "yes" | "true"),
            _ => return Err(fail(format!("items[{k}].{key}"), "unknown item field".into())),
        }
    }
    let record = SceneRecord {
        items,
        capture_ref: capture_ref.ok_or_else(|| PlannerError::Scene { path: "capture_ref".into(), message: "missing".into() })?,
        timestamp: timestamp.ok_or_else(|| PlannerError::Scene { path: "timestamp".into(), message: "missing".into() })?,
    };
    record.validate()?;
    Ok(record)
}

/// Accepts either the JSON fixture or the dashboard text form.
pub fn parse_scene(text: &str) -> Result<SceneRecord, PlannerError> {
    if text.trim_start().starts_with('{') {
        SceneRecord::from_json(text)
    } else {
        parse_scene_text(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE: &str = r#"{
        "items": [
            {"id": 1, "label": "beaker", "interaction_state": ["open", "visible"], "affordances": ["grasp", "pour"], "position": [0.4, 0.1]},
            {"id": 2, "label": "reagent bottle", "interaction_state": ["closed"], "affordances": ["grasp", "twist"], "position": "left of beaker",
             "relations": [{"verb": "left_of", "target": 1}]},
            {"id": 3, "label": "graduated cylinder", "affordances": ["grasp", "pour"], "position": "tray", "constraints": ["fragile"]}
        ],
        "capture_ref": "fixtures/bench.png",
        "timestamp": 0
    }"#;

    #[test]
    fn three_item_fixture() {
        let s = SceneRecord::from_json(THREE).unwrap();
        assert_eq!(s.items.iter().map(|i| i.id).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn duplicate_id_names_the_field() {
        let text = THREE.replace(r#""id": 2"#, r#""id": 1"#);
        match SceneRecord::from_json(&text) {
            Err(PlannerError::Scene { path, .. }) => assert_eq!(path, "items[1].id"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_errors_carry_path() {
        let text = THREE.replace(r#""twist""#, r#""juggle""#);
        match SceneRecord::from_json(&text) {
            Err(PlannerError::Scene { path, .. }) => assert_eq!(path, "items[1].affordances[1]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dangling_relation_rejected() {
        let text = THREE.replace(r#""target": 1"#, r#""target": 9"#);
        assert!(
            matches!(SceneRecord::from_json(&text), Err(PlannerError::Scene { path, .. }) if path == "items[1].relations[0].target")
        );
    }

    #[test]
    fn text_form_round_trips() {
        let s = SceneRecord::from_json(THREE).unwrap();
        let text = render_scene_text(&s);
        assert_eq!(parse_scene(&text).unwrap(), s);
    }

    #[test]
    fn text_form_parses_hand_written_dashboard() {
        let text = "\
[scene]
capture_ref: cam/0007.png
timestamp: 31
#1 alcohol lamp
  state: closed, visible
  affordances: twist, grasp
  position: front left
  constraints: keep away from reagent bottle
#2 reagent bottle
  state: closed, occluded
  affordances: grasp, pour, twist
  position: (0.25, -0.5)
  relations: behind #1
#3 table
  background: yes
  position: under everything
";
        let s = parse_scene(text).unwrap();
        assert_eq!(s.items.len(), 3);
        assert!(s.items[0].interaction_state.contains(&ItemState::Closed));
        assert_eq!(s.items[1].affordances.len(), 3);
        assert_eq!(s.items[1].position, Position::Point([0.25, -0.5]));
        assert_eq!(s.items[1].relations[0], Relation { verb: "behind".into(), target: 1 });
        assert!(!s.items[2].task_relevant);
        assert_eq!(s.timestamp, 31);
    }
}
