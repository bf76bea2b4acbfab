//! MCP session helpers shared by the conformance tests and the acceptance suite.
#![allow(dead_code)]

use std::io::Write;
use std::path::Path;
use std::sync::{mpsc, Arc, Mutex};

use chembot_core::executor::ExecutorConfig;
use chembot_core::mcp::{
    execute_skill_descriptor, parse_frame, Connection, ExecutorSkillRunner, Frame, McpServer, ProgressNotification, SkillCall,
    SkillResult, SkillRunner, SkillStatus,
};
use chembot_core::skills::SkillLibrary;
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use serde_json::{json, Value};

pub const GOLDEN_SESSION: &str = "tests/golden/mcp_session.jsonl";

#[derive(Clone, Default)]
pub struct Sink(Arc<Mutex<Vec<u8>>>);

impl Write for Sink {
    fn write(&mut self, b: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(b);
        Ok(b.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

impl Sink {
    pub fn text(&self) -> String {
        String::from_utf8(self.0.lock().unwrap().clone()).unwrap()
    }
    pub fn frames(&self) -> Vec<Value> {
        self.text().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
    }
}

pub fn oracle_server(trace_dir: &Path, configure: impl FnOnce(&mut ExecutorSkillRunner)) -> Arc<McpServer> {
    let mut runner = ExecutorSkillRunner::new(SkillLibrary::default(), ExecutorConfig::default(), trace_dir.to_path_buf());
    configure(&mut runner);
    Arc::new(McpServer::new(vec![execute_skill_descriptor()], Arc::new(runner)).unwrap())
}

pub fn session(server: Arc<McpServer>, lines: &[Value]) -> Sink {
    let mut input = String::new();
    for l in lines {
        input.push_str(&l.to_string());
        input.push('\n');
    }
    let sink = Sink::default();
    Connection::new(server, Box::new(sink.clone())).run(input.as_bytes()).unwrap();
    sink
}

pub fn call(id: u64, args: Value) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "method": "tools/call", "params": {"name": "execute_skill", "arguments": args}})
}

/// initialize, tools/list and one oracle-driven open-bottle call. Returns the
/// frames and the transcript with the trace directory replaced by `<traces>`.
pub fn scripted_session(trace_dir: &Path) -> (Vec<Value>, String) {
    let sink = session(
        oracle_server(trace_dir, |_| {}),
        &[
            json!({"jsonrpc": "2.0", "id": 1, "method": "initialize", "params": {"protocolVersion": "2024-11-05", "capabilities": {}, "clientInfo": {"name": "test", "version": "0"}}}),
            json!({"jsonrpc": "2.0", "method": "notifications/initialized"}),
            json!({"jsonrpc": "2.0", "id": 2, "method": "tools/list"}),
            call(3, json!({"instruction": "open bottle", "subtask_id": "s1"})),
        ],
    );
    (sink.frames(), sink.text().replace(&trace_dir.display().to_string(), "<traces>"))
}

/// Progress notifications for one call: steps non-decreasing, last value
/// equal to the result's final progress. Returns the notification count.
pub fn check_progress(frames: &[Value], result: &Value) -> usize {
    let notes: Vec<&Value> = frames.iter().filter(|f| f["method"] == "notifications/progress").collect();
    assert!(notes.iter().all(|n| n.get("id").is_none()));
    for w in notes.windows(2) {
        assert!(w[0]["params"]["step"].as_u64() <= w[1]["params"]["step"].as_u64());
    }
    let last = notes.last().expect("at least one notification");
    assert_eq!(last["params"]["value"], result["result"]["structuredContent"]["final_progress"]);
    notes.len()
}

/// Blocks inside the first call until released.
pub struct Gated(pub Mutex<Option<mpsc::Receiver<()>>>);

impl SkillRunner for Gated {
    fn run(&self, call: &SkillCall, notify: &mut dyn FnMut(ProgressNotification)) -> SkillResult {
        if let Some(rx) = self.0.lock().unwrap().take() {
            rx.recv().unwrap();
        }
        notify(ProgressNotification { subtask_id: call.subtask_id.clone(), value: 1.0, step: 0 });
        SkillResult { status: SkillStatus::Success, logs: vec![], final_progress: 1.0, trace_ref: String::new() }
    }
}

pub fn gated_server() -> (Arc<McpServer>, mpsc::Sender<()>) {
    let (tx, rx) = mpsc::channel();
    (Arc::new(McpServer::new(vec![execute_skill_descriptor()], Arc::new(Gated(Mutex::new(Some(rx))))).unwrap()), tx)
}

/// Sends a second call while the first is held. Returns the frames written
/// before release, then the server (gate reopened) for follow-up calls.
pub fn busy_probe() -> (Vec<Value>, Arc<McpServer>) {
    let (server, release) = gated_server();
    let sink = Sink::default();
    let mut conn = Connection::new(server.clone(), Box::new(sink.clone()));
    conn.handle_frame(call(1, json!({"instruction": "a"})).to_string().as_bytes());
    conn.handle_frame(call(2, json!({"instruction": "b"})).to_string().as_bytes());
    let before = sink.frames();
    release.send(()).unwrap();
    conn.run(std::io::empty()).unwrap();
    (before, server)
}

pub struct Instant;

impl SkillRunner for Instant {
    fn run(&self, call: &SkillCall, notify: &mut dyn FnMut(ProgressNotification)) -> SkillResult {
        notify(ProgressNotification { subtask_id: call.subtask_id.clone(), value: 1.0, step: 0 });
        SkillResult { status: SkillStatus::Success, logs: vec![], final_progress: 1.0, trace_ref: String::new() }
    }
}

/// Valid frames, their mutations and raw noise, without newlines.
fn fuzz_frame() -> impl Strategy<Value = Vec<u8>> {
    let seeds = vec![
        json!({"jsonrpc": "2.0", "id": 1, "method": "initialize"}).to_string(),
        json!({"jsonrpc": "2.0", "id": "x", "method": "tools/list"}).to_string(),
        call(7, json!({"instruction": "open bottle"})).to_string(),
        json!({"jsonrpc": "2.0", "method": "notifications/initialized"}).to_string(),
    ];
    let mutated = (proptest::sample::select(seeds), any::<usize>(), any::<u8>(), 0usize..3).prop_map(|(s, at, byte, op)| {
        let mut b = s.into_bytes();
        let at = at % b.len();
        match op {
            0 => b[at] = byte,
            1 => b.truncate(at),
            _ => b.insert(at, byte),
        }
        b
    });
    prop_oneof![mutated, proptest::collection::vec(any::<u8>(), 0..64)]
        .prop_map(|b| b.into_iter().filter(|&c| c != b'\n').collect())
}

pub struct FuzzOutcome {
    /// Frames that are requests or unparseable, plus the trailing ping.
    pub expected_responses: usize,
    pub responses: usize,
    /// The ping sent after the noise was answered.
    pub alive: bool,
}

/// Feeds `n` fuzzed frames, then a ping, through one connection.
pub fn fuzz_session(n: usize) -> FuzzOutcome {
    let server = Arc::new(McpServer::new(vec![execute_skill_descriptor()], Arc::new(Instant)).unwrap());
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let frames = proptest::collection::vec(fuzz_frame(), n).new_tree(&mut runner).unwrap().current();
    let mut input = Vec::new();
    let mut expected = 1;
    for f in &frames {
        if matches!(parse_frame(f), Frame::Request { .. } | Frame::Invalid { .. }) {
            expected += 1;
        }
        input.extend_from_slice(f);
        input.push(b'\n');
    }
    input.extend_from_slice(b"{\"jsonrpc\":\"2.0\",\"id\":\"last\",\"method\":\"ping\"}\n");
    let sink = Sink::default();
    Connection::new(server, Box::new(sink.clone())).run(&input[..]).unwrap();
    let out = sink.frames();
    FuzzOutcome {
        expected_responses: expected,
        // Busy refusals and tool results are responses too.
        responses: out.iter().filter(|f| f.get("id").is_some()).count(),
        alive: out.iter().any(|f| f["id"] == "last" && f["result"] == json!({})),
    }
}
