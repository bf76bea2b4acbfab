//! Connection handling. Requests on one connection are read in order;
//! `tools/call` runs on its own thread so a second call can be refused
//! with the busy code while the first is still executing.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::{json, Value};

use super::protocol::{error_codes::*, error_response, notification, parse_frame, response, Frame, RpcError};
use super::{SkillCall, SkillRunner, SkillStatus, ToolDescriptor, EXECUTE_SKILL, PROTOCOL_VERSION};

/// Frames longer than this are answered with a parse error and discarded.
const MAX_FRAME: usize = 1 << 20;

pub struct McpServer {
    registry: Vec<ToolDescriptor>,
    runner: Arc<dyn SkillRunner>,
    busy: AtomicBool,
    calls: AtomicU64,
}

type Sink = Arc<Mutex<Box<dyn Write + Send>>>;

fn send(sink: &Sink, value: &Value) {
    let mut line = serde_json::to_string(value).expect("frames serialize");
    line.push('\n');
    let mut out = sink.lock().unwrap_or_else(|e| e.into_inner());
    // A vanished peer is not the server's problem.
    let _ = out.write_all(line.as_bytes()).and_then(|_| out.flush());
}

struct BusyGuard<'a>(&'a AtomicBool);

impl Drop for BusyGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

impl McpServer {
    pub fn new(registry: Vec<ToolDescriptor>, runner: Arc<dyn SkillRunner>) -> Result<Self, String> {
        if registry.is_empty() {
            return Err("tool registry is empty".into());
        }
        for (i, t) in registry.iter().enumerate() {
            if registry[..i].iter().any(|o| o.name == t.name) {
                return Err(format!("duplicate tool {}", t.name));
            }
        }
        Ok(Self { registry, runner, busy: AtomicBool::new(false), calls: AtomicU64::new(0) })
    }

    pub fn registry(&self) -> &[ToolDescriptor] {
        &self.registry
    }

    fn parse_call(&self, params: &Value) -> Result<SkillCall, RpcError> {
        let bad = |m: String| RpcError::new(INVALID_PARAMS, m);
        let name = params.get("name").and_then(Value::as_str).ok_or_else(|| bad("params.name must be a string".into()))?;
        if !self.registry.iter().any(|t| t.name == name) || name != EXECUTE_SKILL {
            return Err(bad(format!("unknown tool {name:?}")));
        }
        let empty = json!({});
        let args = match params.get("arguments") {
            None | Some(Value::Null) => &empty,
            Some(a @ Value::Object(_)) => a,
            Some(_) => return Err(bad("params.arguments must be an object".into())),
        };
        if let Some(extra) = args
            .as_object()
            .and_then(|o| o.keys().find(|k| !["instruction", "subtask_id", "completion_threshold"].contains(&k.as_str())))
        {
            return Err(bad(format!("unexpected argument {extra:?}")));
        }
        let instruction = match args.get("instruction") {
            Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
            Some(_) => return Err(bad("instruction must be a non-empty string".into())),
            None => return Err(bad("missing required argument \"instruction\"".into())),
        };
        let subtask_id = match args.get("subtask_id") {
            None | Some(Value::Null) => format!("call-{}", self.calls.fetch_add(1, Ordering::Relaxed) + 1),
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(bad("subtask_id must be a string".into())),
        };
        let completion_threshold = match args.get("completion_threshold") {
            None | Some(Value::Null) => None,
            Some(v) => match v.as_f64() {
                Some(t) if t > 0.0 && t < 1.0 => Some(t),
                _ => return Err(bad("completion_threshold must be a number in (0, 1)".into())),
            },
        };
        Ok(SkillCall { instruction, subtask_id, completion_threshold })
    }

    fn start_call(self: &Arc<Self>, id: Value, params: &Value, sink: &Sink) -> Option<JoinHandle<()>> {
        let call = match self.parse_call(params) {
            Ok(c) => c,
            Err(e) => {
                send(sink, &error_response(&id, &e));
                return None;
            }
        };
        if self.busy.compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire).is_err() {
            send(sink, &error_response(&id, &RpcError::new(BUSY, "busy: another skill is executing")));
            return None;
        }
        let server = Arc::clone(self);
        let sink = Arc::clone(sink);
        let token = params.pointer("/_meta/progressToken").cloned();
        Some(std::thread::spawn(move || {
            let _guard = BusyGuard(&server.busy);
            let run = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                server.runner.run(&call, &mut |n| {
                    let mut params = serde_json::to_value(&n).expect("notification serializes");
                    if let Some(t) = &token {
                        params["progressToken"] = t.clone();
                    }
                    send(&sink, &notification("notifications/progress", params));
                })
            }));
            let reply = match run {
                Ok(result) => {
                    let text = serde_json::to_string(&result).expect("result serializes");
                    response(
                        &id,
                        json!({
                            "content": [{"type": "text", "text": text}],
                            "structuredContent": result,
                            "isError": result.status == SkillStatus::Failure,
                        }),
                    )
                }
                Err(_) => error_response(&id, &RpcError::new(INTERNAL_ERROR, "skill runner panicked")),
            };
            send(&sink, &reply);
        }))
    }

    fn dispatch(self: &Arc<Self>, id: Value, method: &str, params: &Value, sink: &Sink) -> Option<JoinHandle<()>> {
        let result = match method {
            "initialize" => json!({
                "protocolVersion": PROTOCOL_VERSION,
                "capabilities": {"tools": {"listChanged": false}},
                "serverInfo": {"name": "chembot", "version": env!("CARGO_PKG_VERSION")},
            }),
            "ping" => json!({}),
            "tools/list" => json!({"tools": self.registry}),
            "tools/call" => return self.start_call(id, params, sink),
            _ => {
                send(sink, &error_response(&id, &RpcError::new(METHOD_NOT_FOUND, format!("method not found: {method}"))));
                return None;
            }
        };
        send(sink, &response(&id, result));
        None
    }
}

/// One client session over a byte stream.
pub struct Connection {
    server: Arc<McpServer>,
    sink: Sink,
    inflight: Vec<JoinHandle<()>>,
}

impl Connection {
    pub fn new(server: Arc<McpServer>, out: Box<dyn Write + Send>) -> Self {
        Self { server, sink: Arc::new(Mutex::new(out)), inflight: Vec::new() }
    }

    pub fn handle_frame(&mut self, bytes: &[u8]) {
        self.inflight.retain(|h| !h.is_finished());
        match parse_frame(bytes) {
            Frame::Empty | Frame::Notification { .. } => {}
            Frame::Invalid { id, error } => send(&self.sink, &error_response(&id, &error)),
            Frame::Request { id, method, params } => {
                if let Some(h) = self.server.dispatch(id, &method, &params, &self.sink) {
                    self.inflight.push(h);
                }
            }
        }
    }

    /// Reads frames until EOF, then waits for running calls to answer.
    pub fn run(mut self, input: impl Read) -> std::io::Result<()> {
        let mut reader = BufReader::new(input);
        let mut buf = Vec::new();
        loop {
            buf.clear();
            let n = (&mut reader).take(MAX_FRAME as u64 + 1).read_until(b'\n', &mut buf)?;
            if n == 0 {
                break;
            }
            if buf.len() > MAX_FRAME && buf.last() != Some(&b'\n') {
                send(&self.sink, &error_response(&Value::Null, &RpcError::new(PARSE_ERROR, "frame too long")));
                // Skip the rest of the oversized line.
                loop {
                    buf.clear();
                    let n = (&mut reader).take(MAX_FRAME as u64).read_until(b'\n', &mut buf)?;
                    if n == 0 || buf.last() == Some(&b'\n') {
                        break;
                    }
                }
                continue;
            }
            self.handle_frame(&buf);
        }
        for h in self.inflight.drain(..) {
            let _ = h.join();
        }
        Ok(())
    }
}

pub fn serve_stdio(server: Arc<McpServer>) -> std::io::Result<()> {
    Connection::new(server, Box::new(std::io::stdout())).run(std::io::stdin().lock())
}

/// Accepts connections until the listener fails; each gets its own thread.
pub fn serve_tcp(server: Arc<McpServer>, listener: TcpListener) -> std::io::Result<()> {
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let server = Arc::clone(&server);
        std::thread::spawn(move || {
            let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
            let out = match stream.try_clone() {
                Ok(s) => s,
                Err(e) => return log::warn!("{peer}: {e}"),
            };
            if let Err(e) = Connection::new(server, Box::new(out)).run(stream) {
                log::info!("{peer}: connection closed: {e}");
            }
        });
    }
    Ok(())
}
