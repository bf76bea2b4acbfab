//! JSON-RPC 2.0 tool server exposing arm skills to planning agents:
//! `initialize`, `tools/list`, `tools/call` and pushed
//! `notifications/progress`, one JSON object per line over stdio or TCP.

mod protocol;
mod runner;
mod server;

pub use protocol::{error_codes, parse_frame, Frame, RpcError};
pub use runner::{ExecutorSkillRunner, PolicyChoice, ProgressChoice, SkillCall, SkillRunner};
pub use server::{serve_stdio, serve_tcp, Connection, McpServer};

use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: &str = "2024-11-05";
pub const EXECUTE_SKILL: &str = "execute_skill";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ToolDescriptor {
    pub name: String,
    pub description: String,
    pub input_schema: serde_json::Value,
}

/// The single tool this server registers.
pub fn execute_skill_descriptor() -> ToolDescriptor {
    ToolDescriptor {
        name: EXECUTE_SKILL.into(),
        description: "Execute one atomic manipulation skill on the arm and report success or failure. \
                      Progress is pushed as notifications while the skill runs."
            .into(),
        input_schema: serde_json::json!({
            "type": "object",
            "properties": {
                "instruction": {"type": "string", "description": "Atomic natural-language instruction"},
                "subtask_id": {"type": "string", "description": "Caller's id for this subtask"},
                "completion_threshold": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
            },
            "required": ["instruction"],
            "additionalProperties": false
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillStatus {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillResult {
    pub status: SkillStatus,
    pub logs: Vec<String>,
    pub final_progress: f64,
    pub trace_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressNotification {
    pub subtask_id: String,
    pub value: f64,
    pub step: u64,
}
