//! Chunked action execution on a kinematic arm: synchronous and
//! asynchronous inference scheduling, chunk merging, future-state
//! anchoring and progress-based subtask termination.

mod config;
pub mod handle;
mod plan;
mod realtime;
mod scheduler;
mod sim;
mod trace;

pub use config::{ExecMode, ExecutorConfig};
pub use handle::{
    ActionSource, DistanceProgress, FlowActionSource, InferenceRequest, LearnedProgress, Observation, ProgressSource,
    RampProgress, ReplanOracle, ReplayActionSource, ScriptOracle, ScriptedProgress, SubtaskConditioning,
};
pub use plan::{predict_future_state, CommittedPlan, MergeOutcome};
pub use realtime::run_subtask_realtime;
pub use scheduler::{run_fixed, run_subtask, Scheduler, StopRule, SubtaskOutcome, SubtaskStatus};
pub use sim::{RobotLimits, SimRobotState, Simulator, TickOutcome, ACTION_DIM, JOINTS};
pub use trace::{smoothness_report, ChunkRecord, ExecutionTrace, SmoothnessReport, TickRecord, TraceEvent};

#[derive(Debug, thiserror::Error)]
pub enum ExecutorError {
    #[error("config invariant violated: {0}")]
    Config(String),
    #[error("scheduler invariant violated: {0}")]
    Invariant(String),
    #[error("argument error: {0}")]
    Argument(String),
    #[error("policy error: {0}")]
    Policy(#[from] crate::policy::PolicyError),
}
