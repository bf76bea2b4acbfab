//! Incremental task planning: scene ingestion, a propose/reflect loop over
//! chat backends, lexical guards, and backtracking.

mod backend;
mod guard;
mod scene;
mod session;

pub use backend::{
    extract_reply, BackendError, ChatBackend, ChatMessage, ChatRequest, HttpChatBackend, ScriptSpec, ScriptedBackend,
    FEEDBACK_PREFIX, LLM_KEY_ENV, LLM_URL_ENV,
};
pub use guard::{check_atomic, clean_instruction, grounding_issue, redundancy_issue};
pub use scene::{
    parse_scene, parse_scene_text, render_scene_text, Affordance, ItemState, Position, Relation, SceneItem, SceneRecord,
};
pub use session::{
    backtrack, describe_scene, parse_verdict, BacktrackEvent, Decision, PlanState, Planner, PlannerConfig, ReflectionVerdict,
    SceneSource, ScriptedPlanFixture, Subtask, SubtaskStatus,
};

#[derive(Debug, thiserror::Error)]
pub enum PlannerError {
    #[error("scene error at {path}: {message}")]
    Scene { path: String, message: String },
    #[error("backend error: {0}")]
    Backend(#[from] BackendError),
    #[error("backend returned an empty reply")]
    EmptyOutput,
    #[error("backend kept returning non-atomic instructions: {0}")]
    NotAtomic(String),
    #[error("iteration cap {cap} reached with {} queued subtasks", partial.queue.len())]
    IterationCap { cap: usize, partial: Box<PlanState> },
    #[error("argument error: {0}")]
    Argument(String),
    #[error("memory error: {0}")]
    Memory(#[from] crate::memory::MemoryError),
    #[error("io error on {path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
}
