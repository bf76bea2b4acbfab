use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use chembot_core::policy::{load_checkpoint, PolicyConfig, PolicyParams};
use serde_json::Value;

const GOAL: &str = "add 5 mL of reagent to the beaker and stir";

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn chembot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chembot"))
        .args(args)
        .env_remove("CHEMBOT_LLM_URL")
        .env_remove("CHEMBOT_MEMORY_DIR")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn plan_fixture(out: &Path) -> PathBuf {
    let f = fixtures();
    let o = chembot(&[
        "plan",
        "--goal",
        GOAL,
        "--scene",
        s(&f.join("scenes/bench.json")),
        "--script",
        s(&f.join("plans/reject_backtrack.script.json")),
        "--out",
        s(out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out.join("plan.json")
}

fn results(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("results.json")).unwrap()).unwrap()
}

#[test]
fn plan_writes_golden_plan_and_dashboard() {
    let dir = tempfile::tempdir().unwrap();
    let plan = plan_fixture(dir.path());
    assert_eq!(
        std::fs::read_to_string(plan).unwrap(),
        std::fs::read_to_string(fixtures().join("plans/reject_backtrack.plan.json")).unwrap()
    );
    let dash: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("dashboard.json")).unwrap()).unwrap();
    assert_eq!(dash["task_state"]["phase"], "planned");
    assert_eq!(dash["scene"]["items"].as_array().unwrap().len(), 4);
}

#[test]
fn plan_input_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = chembot(&["plan", "--goal", "x", "--scene", s(&dir.path().join("missing.json")), "--out", s(dir.path())]);
    assert_eq!(code(&o), 3);
    let o = chembot(&["plan", "--goal", "x", "--scene", s(&fixtures().join("scenes/bench.json")), "--out", s(dir.path())]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("CHEMBOT_LLM_URL"));
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[executor]\ndelay = 40\n").unwrap();
    assert_eq!(code(&chembot(&["--config", s(&cfg), "gen-data", "--n", "1", "--out", s(dir.path())])), 3);
}

#[test]
fn simulate_oracle_plan_succeeds_with_traces() {
    let dir = tempfile::tempdir().unwrap();
    let plan = plan_fixture(&dir.path().join("plan"));
    let out = dir.path().join("sim");
    let o = chembot(&["simulate", "--plan", s(&plan), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = results(&out);
    let subs = r["subtasks"].as_array().unwrap();
    assert_eq!(subs.len(), 3);
    assert!(subs.iter().all(|x| x["status"] == "success"));
    assert_eq!(std::fs::read_dir(out.join("traces")).unwrap().count(), 3);
}

#[test]
fn injected_failure_stops_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let plan = plan_fixture(&dir.path().join("plan"));
    let out = dir.path().join("sim");
    let o = chembot(&["simulate", "--plan", s(&plan), "--inject-fault", "1", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    let r = results(&out);
    let subs = r["subtasks"].as_array().unwrap();
    assert_eq!(subs.len(), 2);
    assert_eq!(subs[1]["status"], "failure");
    assert!(subs[1]["logs"].as_array().unwrap().iter().any(|l| l.as_str().unwrap().contains("non-finite")));
    assert!(!out.join("traces/subtask-2.csv").exists());
}

#[test]
fn async_rtc_needs_fewer_wall_ticks_than_sync() {
    let dir = tempfile::tempdir().unwrap();
    let plan = plan_fixture(&dir.path().join("plan"));
    let mut wall = Vec::new();
    for mode in ["sync", "async_rtc"] {
        let out = dir.path().join(mode);
        assert_eq!(code(&chembot(&["--seed", "3", "simulate", "--plan", s(&plan), "--mode", mode, "--out", s(&out)])), 0);
        wall.push(results(&out)["wall_steps"].as_u64().unwrap());
    }
    assert!(wall[1] < wall[0], "{wall:?}");
}

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.toml");
    std::fs::write(
        &p,
        "[policy]\nhorizon = 10\nembed_dim = 8\nhidden_dim = 16\nhidden_layers = 1\ntime_features = 4\nattn_dim = 8\nprogress_hidden = 8\nrtc_max_prefix = 2\n\n[train]\nbatch_size = 4\n",
    )
    .unwrap();
    p
}

#[test]
fn zero_step_training_saves_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    let o = chembot(&["--config", s(&cfg), "--seed", "5", "train", "--episodes", "3", "--steps", "0", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ck = load_checkpoint(&out.join("checkpoint-0.bin")).unwrap();
    let mut pc: PolicyConfig =
        toml::from_str::<toml::Table>(&std::fs::read_to_string(&cfg).unwrap()).unwrap()["policy"].clone().try_into().unwrap();
    pc.n_instructions = ck.meta.instructions.len();
    let init = PolicyParams::init(pc, 5).unwrap();
    assert_eq!(ck.params.tensors, init.tensors);
    assert_eq!(std::fs::read_to_string(out.join("metrics.csv")).unwrap().lines().count(), 1);
}

#[test]
fn resumed_training_continues_the_loss_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let full = dir.path().join("full");
    let base = ["--config", s(&cfg), "train", "--episodes", "3"];
    let o = chembot(&[&base[..], &["--steps", "6", "--checkpoint-every", "3", "--out", s(&full)]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(full.join("checkpoint-3.bin").is_file() && full.join("checkpoint-6.bin").is_file());

    let part = dir.path().join("part");
    assert_eq!(code(&chembot(&[&base[..], &["--steps", "3", "--out", s(&part)]].concat())), 0);
    let resume = part.join("checkpoint-3.bin");
    assert_eq!(code(&chembot(&[&base[..], &["--steps", "3", "--resume", s(&resume), "--out", s(&part)]].concat())), 0);
    assert_eq!(
        std::fs::read_to_string(full.join("metrics.csv")).unwrap(),
        std::fs::read_to_string(part.join("metrics.csv")).unwrap()
    );
}

#[test]
fn gen_data_is_reproducible_and_stats_read_it() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(code(&chembot(&["gen-data", "--n", "10", "--seed", "0", "--out", s(d)])), 0);
    }
    assert_eq!(std::fs::read(a.join("manifest.json")).unwrap(), std::fs::read(b.join("manifest.json")).unwrap());
    let o = chembot(&["stats", "--data", s(&a)]);
    assert_eq!(code(&o), 0);
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.starts_with("category,episodes,frames,mean_frames,segments\n"));
    assert!(csv.lines().last().unwrap().starts_with("all,10,"));
}

#[test]
fn eval_on_bundled_run_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let o =
        chembot(&["eval", "--runs", s(&fixtures().join("eval_run")), "--sigma", "0.2", "--theta", "0.3", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap(),
        std::fs::read_to_string(fixtures().join("eval_run/expected_metrics.csv")).unwrap()
    );
    // A run directory without inputs still gets a report, flagged as partial.
    let empty = tempfile::tempdir().unwrap();
    assert_eq!(code(&chembot(&["eval", "--runs", s(empty.path())])), 3);
    assert!(empty.path().join("report/missing.txt").is_file());
}

#[test]
fn serve_stdio_lists_the_registry() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_chembot"))
        .args(["serve", "--stdio", "--out", s(dir.path())])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    writeln!(stdin, r#"{{"jsonrpc":"2.0","id":1,"method":"initialize"}}"#).unwrap();
    writeln!(stdin, "not json").unwrap();
    writeln!(stdin, r#"{{"jsonrpc":"2.0","id":2,"method":"tools/list"}}"#).unwrap();
    drop(stdin);
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let frames: Vec<Value> = String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(frames.len(), 3);
    assert_eq!(frames[1]["error"]["code"], -32700);
    let want = serde_json::to_value(vec![chembot_core::mcp::execute_skill_descriptor()]).unwrap();
    assert_eq!(frames[2]["result"]["tools"], want);
}

#[test]
fn simulate_records_memory_for_profile() {
    let dir = tempfile::tempdir().unwrap();
    let plan = plan_fixture(&dir.path().join("plan"));
    let mem = dir.path().join("mem");
    let o = chembot(&[
        "simulate",
        "--plan",
        s(&plan),
        "--memory",
        s(&mem),
        "--category",
        "liquid_transfer",
        "--out",
        s(&dir.path().join("sim")),
    ]);
    assert_eq!(code(&o), 0);
    let o = chembot(&["profile", "--memory", s(&mem)]);
    assert_eq!(code(&o), 0);
    let p: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(p["episodes"], 1);
    assert_eq!(p["categories"]["liquid_transfer"]["successes"], 1);
    assert_eq!(code(&chembot(&["profile"])), 3);
}
