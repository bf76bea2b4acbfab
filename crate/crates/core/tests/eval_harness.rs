use std::path::Path;

use chembot_core::eval::{run_eval, wilson_interval, EvalConfig, Z_68};
use chembot_core::executor::{
    run_subtask, smoothness_report, DistanceProgress, ExecMode, ExecutorConfig, ReplanOracle, SimRobotState, JOINTS,
};
use chembot_core::skills::SkillLibrary;

fn put(root: &Path, rel: &str, text: &str) {
    let p = root.join(rel);
    std::fs::create_dir_all(p.parent().unwrap()).unwrap();
    std::fs::write(p, text).unwrap();
}

#[test]
fn paired_traces_pass_through_smoothness() {
    let dir = tempfile::tempdir().unwrap();
    let lib = SkillLibrary::default();
    let goal = lib.skills[0].target.clone();
    let mut expected = Vec::new();
    for mode in [ExecMode::Sync, ExecMode::AsyncRtc] {
        let cfg = ExecutorConfig { mode, ..ExecutorConfig::default() };
        let mut act = ReplanOracle::new(goal.clone(), 0, 120, 0.0, 3);
        let mut prog = DistanceProgress { start: lib.home.clone(), goal: goal.clone() };
        let out = run_subtask(&cfg, SimRobotState::from_vector(&lib.home, 0), &mut act, &mut prog, &mut |_| {}).unwrap();
        put(dir.path(), &format!("traces/pair0_{}.csv", mode.as_str()), &out.trace.to_csv());
        expected.push((mode.as_str(), smoothness_report(&out.trace, JOINTS).unwrap()));
    }
    let report = run_eval(&EvalConfig::new(dir.path())).unwrap();
    // No outputs/refs were given, so the report is partial but still written.
    assert!(report.missing.contains(&"outputs/".to_string()));
    assert_eq!(report.smoothness.len(), 2);
    for (mode, want) in &expected {
        let got = report.smoothness.iter().find(|t| t.mode == *mode).unwrap();
        assert_eq!(&got.report, want);
    }
    let sync = &report.smoothness.iter().find(|t| t.mode == "sync").unwrap().report;
    let rtc = &report.smoothness.iter().find(|t| t.mode == "async_rtc").unwrap().report;
    assert!(rtc.wall_steps < sync.wall_steps);
    assert_eq!(rtc.pause_count, 0);
    assert!(dir.path().join("report/plotdata/pair0_sync_commanded.csv").is_file());
}

#[test]
fn twelve_of_sixteen_wilson_interval() {
    // Closed form with p = 0.75, n = 16, z = 0.9945.
    let (z, n, p) = (0.9945f64, 16.0f64, 0.75f64);
    let c = (p + z * z / (2.0 * n)) / (1.0 + z * z / n);
    let h = z / (1.0 + z * z / n) * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt();
    let (lo, hi) = wilson_interval(12, 16, Z_68).unwrap();
    assert!((lo - (c - h)).abs() < 1e-12 && (hi - (c + h)).abs() < 1e-12);
    assert!((lo - 0.625).abs() < 0.005 && (hi - 0.845).abs() < 0.005, "{lo} {hi}");
}

#[test]
fn sr_rows_per_group_and_pooled() {
    let dir = tempfile::tempdir().unwrap();
    put(dir.path(), "outputs/a.json", r#"["x"]"#);
    put(dir.path(), "refs/a.json", r#"["x"]"#);
    put(
        dir.path(),
        "trials.json",
        r#"[
            {"group": "titration", "atomic_points": 3, "atomic_max": 4, "subtask_points": 1, "subtask_max": 2, "task_point": 0},
            {"group": "titration", "atomic_points": 4, "atomic_max": 4, "subtask_points": 2, "subtask_max": 2, "task_point": 1},
            {"group": "stirring", "atomic_points": 2, "atomic_max": 2, "subtask_points": 1, "subtask_max": 1, "task_point": 1}
        ]"#,
    );
    let report = run_eval(&EvalConfig::new(dir.path())).unwrap();
    assert!(!report.is_partial(), "{:?}", report.missing);
    let groups: Vec<&str> = report.sr.iter().map(|s| s.group.as_str()).collect();
    assert_eq!(groups, ["stirring", "titration", "all"]);
    let all = &report.sr[2];
    // (4 + 7 + 4) / (7 + 7 + 4)
    assert_eq!((all.s_obs, all.s_max), (15, 18));
    assert!((all.sr_percent - 1500.0 / 18.0).abs() < 1e-9);
    let csv = std::fs::read_to_string(dir.path().join("report/sr.csv")).unwrap();
    assert!(csv.lines().last().unwrap().starts_with("all,3,15,18,83.333333,"));
}

#[test]
fn bundled_run_matches_hand_counts() {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/eval_run");
    let out = tempfile::tempdir().unwrap();
    let cfg = EvalConfig { out_dir: Some(out.path().to_path_buf()), ..EvalConfig::new(&fixture) };
    let report = run_eval(&cfg).unwrap();
    assert!(!report.is_partial(), "{:?}", report.missing);
    for (got, want) in [("metrics.csv", "expected_metrics.csv"), ("sr.csv", "expected_sr.csv")] {
        assert_eq!(
            std::fs::read_to_string(out.path().join(got)).unwrap(),
            std::fs::read_to_string(fixture.join(want)).unwrap(),
            "{got}"
        );
    }
}
