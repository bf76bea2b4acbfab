//! Demonstration episodes: file format, acceptance rules, progress labels,
//! synthetic generation and summary statistics.

mod episode;
mod samples;
mod stats;
mod synth;

pub use episode::{annotate_progress, validate_episode, Episode, EpisodeMeta, EpisodeSource, SubtaskSegment, Validation};
pub use samples::{segment_conditioning, segment_context, training_set, SampleOptions};
pub use stats::{dataset_stats, CategoryStats, DatasetStats};
pub use synth::{generate_synthetic, SynthOptions};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("data error: {0}")]
    Data(String),
    #[error("script error: {0}")]
    Script(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed {path}: {message}")]
    Malformed { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub file: String,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub episodes: Vec<ManifestEntry>,
    pub categories: Vec<String>,
    /// Instruction vocabulary; the position of an instruction is its id.
    pub instructions: Vec<String>,
    /// Skill labels aligned with `instructions`.
    #[serde(default)]
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub episodes: Vec<Episode>,
}

impl Dataset {
    pub fn instruction_id(&self, label: &str) -> Option<usize> {
        self.manifest.labels.iter().position(|l| l == label)
    }

    /// Writes `manifest.json` and one `<id>.episode.json` per episode.
    pub fn save(&self, dir: &Path) -> Result<(), DatasetError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        for ep in &self.episodes {
            let path = dir.join(format!("{}.episode.json", ep.id));
            std::fs::write(&path, ep.to_json()).map_err(io_err(&path))?;
        }
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(io_err(&path))
    }

    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| DatasetError::Malformed { path: path.clone(), message: e.to_string() })?;
        let mut episodes = Vec::with_capacity(manifest.episodes.len());
        for entry in &manifest.episodes {
            let path = dir.join(&entry.file);
            let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
            let ep = Episode::from_json(&text).map_err(|message| DatasetError::Malformed { path: path.clone(), message })?;
            episodes.push(ep);
        }
        Ok(Self { manifest, episodes })
    }
}
