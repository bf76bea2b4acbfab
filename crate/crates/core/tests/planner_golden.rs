use std::path::{Path, PathBuf};

use chembot_core::memory::Dashboard;
use chembot_core::planner::{
    describe_scene, PlanState, Planner, PlannerConfig, SceneSource, ScriptedBackend, ScriptedPlanFixture,
};

const GOAL: &str = "add 5 mL of reagent to the beaker and stir";

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn run(name: &str) -> (PlanState, String) {
    let fx = ScriptedPlanFixture::load(&fixtures().join(format!("plans/{name}.script.json"))).unwrap();
    let mut dashboard = Dashboard::default();
    describe_scene(SceneSource::Fixture(&fixtures().join("scenes/bench.json")), &mut dashboard).unwrap();
    let mut reasoner = ScriptedBackend::from_spec(&fx.reasoner);
    let mut reflector = ScriptedBackend::from_spec(&fx.reflector);
    let state =
        Planner::new(&mut reasoner, &mut reflector, PlannerConfig::default()).plan_loop(GOAL, &mut dashboard, None).unwrap();
    let text = state.to_json();
    let golden = fixtures().join(format!("plans/{name}.plan.json"));
    if std::env::var_os("CHEMBOT_BLESS").is_some() {
        std::fs::write(&golden, &text).unwrap();
    }
    assert_eq!(text, std::fs::read_to_string(&golden).unwrap(), "{name} differs from its golden file");
    (state, text)
}

#[test]
fn linear_plan() {
    let (s, _) = run("linear");
    assert_eq!(s.queue.len(), 4);
    assert!(s.backtrack_events.is_empty());
    assert_eq!(s.iteration, 5);
}

#[test]
fn rejection_then_continue() {
    let (s, _) = run("reject_backtrack");
    assert_eq!(
        s.instructions(),
        ["open the reagent bottle", "pour 5 mL of the reagent into the beaker", "stir the beaker with the glass rod"]
    );
    assert_eq!(s.backtrack_events.len(), 1);
    assert_eq!(s.backtrack_events[0].instruction, "heat the beaker to 60 C");
}

#[test]
fn rollback_drops_later_steps() {
    let (s, _) = run("rollback");
    assert_eq!(
        s.instructions(),
        [
            "grasp the reagent bottle",
            "open the reagent bottle",
            "pour 5 mL of the reagent into the beaker",
            "stir the beaker with the glass rod"
        ]
    );
    assert_eq!(s.backtrack_events.len(), 1);
    let deleted: Vec<&str> = s.deleted.iter().map(|d| d.instruction.as_str()).collect();
    assert!(deleted.contains(&"pour 5 mL of the reagent into the beaker"));
    assert!(deleted.contains(&"stir the beaker with the glass rod"));
}

#[test]
fn builtin_guards_reject_before_the_reflector() {
    let (s, _) = run("guards");
    assert_eq!(s.instructions(), ["open the reagent bottle", "pour 5 mL of the reagent into the beaker"]);
    let reasons: Vec<&str> = s.backtrack_events.iter().map(|e| e.reason.as_str()).collect();
    assert_eq!(reasons.len(), 2);
    assert!(reasons[0].starts_with("redundant with step 0"), "{reasons:?}");
    assert_eq!(reasons[1], "infeasible: no burette in the scene");
}

#[test]
fn reruns_are_byte_identical() {
    for name in ["linear", "reject_backtrack", "rollback", "guards"] {
        assert_eq!(run(name).1, run(name).1);
    }
}
