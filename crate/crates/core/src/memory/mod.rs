//! Working memory (the dashboard and its artifact index) and the persistent
//! episodic store with lexical retrieval and preference profiles.

mod dashboard;
mod episodic;
mod profile;

pub use dashboard::{
    ArtifactKind, ArtifactStore, Dashboard, DashboardUpdate, TaskState, ToolIndexEntry, DEFAULT_BYTE_BUDGET, SUMMARY_MAX_CHARS,
};
pub use episodic::{DialogueTurn, EpisodeScorer, EpisodicRecord, EpisodicStore, Outcome, Retrieved, TfIdfScorer, EPISODES_FILE};
pub use profile::{extract_profile, CategoryProfile, PreferenceProfile};

use std::path::{Path, PathBuf};

pub const MEMORY_DIR_ENV: &str = "CHEMBOT_MEMORY_DIR";

/// Memory root from `CHEMBOT_MEMORY_DIR`, or `fallback` when unset.
pub fn memory_root(fallback: &Path) -> PathBuf {
    std::env::var_os(MEMORY_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| fallback.to_path_buf())
}

#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    #[error("invalid {section}: {message}")]
    Invalid { section: &'static str, message: String },
    #[error("dashboard needs {needed} bytes but the budget is {budget}")]
    Budget { needed: usize, budget: usize },
    #[error("artifact {0} is gone; its index entry was evicted")]
    StaleIndex(PathBuf),
    #[error("no index entry for {0}")]
    NotIndexed(PathBuf),
    #[error("session id {0} already stored")]
    DuplicateSession(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MemoryError + '_ {
    move |source| MemoryError::Io { path: path.to_path_buf(), source }
}
