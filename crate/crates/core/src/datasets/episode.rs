use serde::{Deserialize, Serialize};

use super::DatasetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeSource {
    Teleop,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub category: String,
    pub source: EpisodeSource,
    /// Set when the recording contains an execution error.
    #[serde(default)]
    pub error: bool,
    /// Camera streams, by path only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cameras: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskSegment {
    pub label: String,
    pub start_frame: usize,
    pub end_frame: usize,
    /// Pose the subtask drives to, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
}

/// Frames are stored as flat row-major arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub meta: EpisodeMeta,
    pub state_dim: usize,
    pub action_dim: usize,
    pub t: Vec<u64>,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub segments: Vec<SubtaskSegment>,
    /// Per-frame progress label; `None` outside every segment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub progress: Option<Vec<Option<f64>>>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn state(&self, frame: usize) -> &[f64] {
        &self.states[frame * self.state_dim..(frame + 1) * self.state_dim]
    }

    pub fn action(&self, frame: usize) -> &[f64] {
        &self.actions[frame * self.action_dim..(frame + 1) * self.action_dim]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("episode serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    fn structure_problem(&self) -> Option<String> {
        let n = self.t.len();
        if n == 0 {
            return Some("episode has no frames".into());
        }
        if self.states.len() != n * self.state_dim || self.actions.len() != n * self.action_dim {
            return Some("frame arrays do not match the declared dimensions".into());
        }
        if let Some(w) = self.t.windows(2).position(|w| w[1] <= w[0]) {
            return Some(format!("frame times not strictly increasing at frame {}", w + 1));
        }
        if let Some(p) = &self.progress {
            if p.len() != n {
                return Some("progress labels do not match the frame count".into());
            }
        }
        for s in &self.segments {
            if s.start_frame >= s.end_frame {
                return Some(format!("segment {} has start {} >= end {}", s.label, s.start_frame, s.end_frame));
            }
            if s.end_frame >= n {
                return Some(format!("segment {} ends at frame {} beyond the last frame {}", s.label, s.end_frame, n - 1));
            }
        }
        for w in self.segments.windows(2) {
            if w[1].start_frame <= w[0].end_frame {
                return Some(format!("segments {} and {} overlap", w[0].label, w[1].label));
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Validation {
    Accept,
    Reject(String),
}

impl Validation {
    pub fn is_accept(&self) -> bool {
        matches!(self, Validation::Accept)
    }
}

/// Accepts an episode iff it is well formed, carries no error flag, and
/// its segment labels are exactly `expected` in order.
pub fn validate_episode(episode: &Episode, expected: &[String]) -> Validation {
    if expected.is_empty() {
        return Validation::Reject("expected subtask sequence is empty".into());
    }
    if episode.meta.error {
        return Validation::Reject("episode is flagged with an execution error".into());
    }
    if let Some(problem) = episode.structure_problem() {
        return Validation::Reject(problem);
    }
    let labels: Vec<&str> = episode.segments.iter().map(|s| s.label.as_str()).collect();
    if labels.iter().copied().eq(expected.iter().map(String::as_str)) {
        return Validation::Accept;
    }
    if let Some(missing) = expected.iter().find(|e| !labels.contains(&e.as_str())) {
        return Validation::Reject(format!("missing subtask {missing}"));
    }
    if let Some(extra) = labels.iter().find(|l| !expected.iter().any(|e| e == *l)) {
        return Validation::Reject(format!("unexpected subtask {extra}"));
    }
    Validation::Reject(format!("subtasks out of order: expected [{}], found [{}]", expected.join(", "), labels.join(", ")))
}

/// Labels every in-segment frame with `(t − t_start) / (t_end − t_start)`.
pub fn annotate_progress(episode: &Episode) -> Result<Episode, DatasetError> {
    let n = episode.len();
    let mut labels = vec![None; n];
    for s in &episode.segments {
        if s.end_frame >= n || s.start_frame > s.end_frame {
            return Err(DatasetError::Data(format!("segment {} lies outside episode {}", s.label, episode.id)));
        }
        let (t0, t1) = (episode.t[s.start_frame], episode.t[s.end_frame]);
        if t1 == t0 {
            return Err(DatasetError::Data(format!("segment {} in episode {} has zero length", s.label, episode.id)));
        }
        for f in s.start_frame..=s.end_frame {
            labels[f] = Some((episode.t[f] - t0) as f64 / (t1 - t0) as f64);
        }
    }
    let mut out = episode.clone();
    out.progress = Some(labels);
    Ok(out)
}
