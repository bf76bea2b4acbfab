use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{io_err, MemoryError};
use crate::planner::SceneRecord;

pub const DEFAULT_BYTE_BUDGET: usize = 32 * 1024;
pub const SUMMARY_MAX_CHARS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Image,
    RetrievedText,
    Log,
}

/// A bulky tool output represented by where it lives and what it says.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolIndexEntry {
    pub path: PathBuf,
    pub kind: ArtifactKind,
    pub summary: String,
    pub created_at: u64,
}

impl ToolIndexEntry {
    fn validate(&self) -> Result<(), MemoryError> {
        let invalid = |message: String| Err(MemoryError::Invalid { section: "tool_index", message });
        if self.summary.trim().is_empty() {
            return invalid(format!("summary for {} is empty", self.path.display()));
        }
        if self.summary.chars().count() > SUMMARY_MAX_CHARS {
            return invalid(format!("summary for {} exceeds {SUMMARY_MAX_CHARS} characters", self.path.display()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskState {
    pub phase: String,
    pub current_reagents: Vec<String>,
    pub pending_objectives: Vec<String>,
    pub completed_subtasks: Vec<(usize, String)>,
}

impl TaskState {
    pub fn validate(&self) -> Result<(), MemoryError> {
        if self.completed_subtasks.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(MemoryError::Invalid {
                section: "task_state",
                message: "completed subtask indices must be strictly increasing".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DashboardUpdate {
    Scene(SceneRecord),
    TaskState(TaskState),
    Phase(String),
    Reagents(Vec<String>),
    PendingObjectives(Vec<String>),
    CompleteSubtask(usize, String),
    ToolEntry(ToolIndexEntry),
}

fn default_budget() -> usize {
    DEFAULT_BYTE_BUDGET
}

/// Short-term working memory. Sections are overwritten in place; tool
/// entries are appended and the least recently used ones are evicted when
/// the serialized form would exceed the byte budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dashboard {
    pub scene: Option<SceneRecord>,
    pub tool_index: Vec<ToolIndexEntry>,
    pub task_state: TaskState,
    #[serde(skip, default = "default_budget")]
    pub byte_budget: usize,
}

impl Default for Dashboard {
    fn default() -> Self {
        Self::with_budget(DEFAULT_BYTE_BUDGET)
    }
}

impl Dashboard {
    pub fn with_budget(byte_budget: usize) -> Self {
        Self { scene: None, tool_index: Vec::new(), task_state: TaskState::default(), byte_budget }
    }

    pub fn serialized_size(&self) -> usize {
        serde_json::to_vec(self).expect("dashboard serializes").len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dashboard serializes")
    }

    /// Applies `update` atomically: on error the dashboard is unchanged.
    pub fn update(&mut self, update: DashboardUpdate) -> Result<(), MemoryError> {
        let mut next = self.clone();
        match update {
            DashboardUpdate::Scene(scene) => {
                scene.validate().map_err(|e| MemoryError::Invalid { section: "scene", message: e.to_string() })?;
                next.scene = Some(scene);
            }
            DashboardUpdate::TaskState(state) => next.task_state = state,
            DashboardUpdate::Phase(phase) => next.task_state.phase = phase,
            DashboardUpdate::Reagents(r) => next.task_state.current_reagents = r,
            DashboardUpdate::PendingObjectives(p) => next.task_state.pending_objectives = p,
            DashboardUpdate::CompleteSubtask(index, instruction) => {
                let done = &mut next.task_state.completed_subtasks;
                if done.last() != Some(&(index, instruction.clone())) {
                    done.push((index, instruction));
                }
            }
            DashboardUpdate::ToolEntry(entry) => {
                entry.validate()?;
                next.tool_index.retain(|e| e.path != entry.path);
                next.tool_index.push(entry);
            }
        }
        next.task_state.validate()?;
        while next.serialized_size() > next.byte_budget && !next.tool_index.is_empty() {
            next.tool_index.remove(0);
        }
        let needed = next.serialized_size();
        if needed > next.byte_budget {
            return Err(MemoryError::Budget { needed, budget: next.byte_budget });
        }
        *self = next;
        Ok(())
    }

    /// Records a path and summary for an existing file; the content stays
    /// on disk until `load_artifact`. Summaries are cut to 200 characters.
    pub fn index_artifact(
        &mut self,
        path: &Path,
        kind: ArtifactKind,
        summary: &str,
        created_at: u64,
    ) -> Result<ToolIndexEntry, MemoryError> {
        std::fs::metadata(path).map_err(io_err(path))?;
        let entry = ToolIndexEntry {
            path: path.to_path_buf(),
            kind,
            summary: summary.trim().chars().take(SUMMARY_MAX_CHARS).collect(),
            created_at,
        };
        self.update(DashboardUpdate::ToolEntry(entry.clone()))?;
        Ok(entry)
    }

    /// Reads an indexed artifact. A successful load marks the entry most
    /// recently used; a missing file evicts it.
    pub fn load_artifact(&mut self, path: &Path) -> Result<Vec<u8>, MemoryError> {
        let k = self.tool_index.iter().position(|e| e.path == path).ok_or_else(|| MemoryError::NotIndexed(path.to_path_buf()))?;
        match std::fs::read(path) {
            Ok(bytes) => {
                let entry = self.tool_index.remove(k);
                self.tool_index.push(entry);
                Ok(bytes)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                self.tool_index.remove(k);
                Err(MemoryError::StaleIndex(path.to_path_buf()))
            }
            Err(e) => Err(io_err(path)(e)),
        }
    }
}

/// Content-addressed blobs under `<root>/artifacts/<sha256>`.
#[derive(Debug, Clone)]
pub struct ArtifactStore {
    pub root: PathBuf,
}

impl ArtifactStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn put(&self, bytes: &[u8]) -> Result<PathBuf, MemoryError> {
        let dir = self.root.join("artifacts");
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join(hex::encode(Sha256::digest(bytes)));
        if !path.exists() {
            std::fs::write(&path, bytes).map_err(io_err(&path))?;
        }
        Ok(path)
    }
}
