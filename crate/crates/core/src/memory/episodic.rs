use std::collections::HashMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_err, MemoryError};
use crate::text::tokenize;

pub const EPISODES_FILE: &str = "episodes.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub role: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodicRecord {
    /// Assigned by the store when empty.
    #[serde(default)]
    pub session_id: String,
    pub timestamp: u64,
    pub instruction: String,
    /// Experiment category used to group preference profiles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub dialogue: Vec<DialogueTurn>,
    pub final_plan: Vec<String>,
    pub outcome: Outcome,
}

impl EpisodicRecord {
    /// The text retrieval runs over.
    pub fn indexed_text(&self) -> String {
        let mut text = self.instruction.clone();
        for step in &self.final_plan {
            text.push('\n');
            text.push_str(step);
        }
        text
    }
}

/// Relevance of each document to a query; higher is better.
pub trait EpisodeScorer {
    fn score(&self, docs: &[String], query: &str) -> Vec<f64>;
}

/// Cosine similarity of raw-count tf times smoothed idf,
/// `idf(t) = ln((1 + N) / (1 + df(t))) + 1`, so a term present in every
/// document still carries weight and a lone document matches itself at 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct TfIdfScorer;

impl EpisodeScorer for TfIdfScorer {
    fn score(&self, docs: &[String], query: &str) -> Vec<f64> {
        let counts: Vec<HashMap<String, f64>> = docs.iter().map(|d| term_counts(d)).collect();
        let mut df: HashMap<&str, f64> = HashMap::new();
        for c in &counts {
            for t in c.keys() {
                *df.entry(t).or_default() += 1.0;
            }
        }
        let n = docs.len() as f64;
        let idf = |t: &str| ((1.0 + n) / (1.0 + df.get(t).copied().unwrap_or(0.0))).ln() + 1.0;
        let weigh =
            |c: &HashMap<String, f64>| -> HashMap<String, f64> { c.iter().map(|(t, v)| (t.clone(), v * idf(t))).collect() };
        let q = weigh(&term_counts(query));
        let qn = norm(&q);
        counts
            .iter()
            .map(|c| {
                let d = weigh(c);
                let dn = norm(&d);
                if qn == 0.0 || dn == 0.0 {
                    return 0.0;
                }
                let dot: f64 = q.iter().filter_map(|(t, w)| d.get(t).map(|v| v * w)).sum();
                (dot / (qn * dn)).min(1.0)
            })
            .collect()
    }
}

fn term_counts(text: &str) -> HashMap<String, f64> {
    let mut m = HashMap::new();
    for t in tokenize(text) {
        *m.entry(t).or_default() += 1.0;
    }
    m
}

fn norm(v: &HashMap<String, f64>) -> f64 {
    v.values().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved {
    pub record: EpisodicRecord,
    pub similarity: f64,
}

/// Append-only JSON-lines store of past sessions. The in-memory copy is
/// rebuilt from the file on open; corrupt lines are skipped with a warning.
#[derive(Debug)]
pub struct EpisodicStore {
    path: PathBuf,
    records: Vec<EpisodicRecord>,
    skipped: usize,
}

impl EpisodicStore {
    pub fn open(root: &Path) -> Result<Self, MemoryError> {
        std::fs::create_dir_all(root).map_err(io_err(root))?;
        let path = root.join(EPISODES_FILE);
        let mut records: Vec<EpisodicRecord> = Vec::new();
        let mut skipped = 0;
        if path.exists() {
            let bytes = std::fs::read(&path).map_err(io_err(&path))?;
            for (n, line) in bytes.split(|b| *b == b'\n').enumerate() {
                if line.iter().all(u8::is_ascii_whitespace) {
                    continue;
                }
                match serde_json::from_slice::<EpisodicRecord>(line) {
                    Ok(r) if !r.session_id.is_empty() && !records.iter().any(|x| x.session_id == r.session_id) => records.push(r),
                    Ok(r) => {
                        log::warn!(
                            "{}:{}: skipping record with missing or duplicate session id {:?}",
                            path.display(),
                            n + 1,
                            r.session_id
                        );
                        skipped += 1;
                    }
                    Err(e) => {
                        log::warn!("{}:{}: skipping corrupt record: {e}", path.display(), n + 1);
                        skipped += 1;
                    }
                }
            }
        }
        Ok(Self { path, records, skipped })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> &[EpisodicRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Lines dropped while opening.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn store(&mut self, mut record: EpisodicRecord) -> Result<String, MemoryError> {
        if record.instruction.trim().is_empty() {
            return Err(MemoryError::Invalid { section: "episode", message: "instruction is empty".into() });
        }
        if record.dialogue.is_empty() {
            return Err(MemoryError::Invalid { section: "episode", message: "dialogue is empty".into() });
        }
        if record.session_id.is_empty() {
            let mut k = self.records.len() + 1;
            while self.records.iter().any(|r| r.session_id == format!("session-{k:06}")) {
                k += 1;
            }
            record.session_id = format!("session-{k:06}");
        } else if self.records.iter().any(|r| r.session_id == record.session_id) {
            return Err(MemoryError::DuplicateSession(record.session_id));
        }
        let mut line = serde_json::to_string(&record).expect("record serializes");
        line.push('\n');
        let mut file = std::fs::OpenOptions::new().create(true).append(true).open(&self.path).map_err(io_err(&self.path))?;
        // A torn previous write leaves no newline; start on a fresh line.
        if file.metadata().map(|m| m.len() > 0).unwrap_or(false) && !ends_with_newline(&self.path) {
            line.insert(0, '\n');
        }
        file.write_all(line.as_bytes()).map_err(io_err(&self.path))?;
        file.flush().map_err(io_err(&self.path))?;
        let id = record.session_id.clone();
        self.records.push(record);
        Ok(id)
    }

    pub fn retrieve(&self, query: &str, k: usize) -> Vec<Retrieved> {
        self.retrieve_with(&TfIdfScorer, query, k)
    }

    /// Top `k` by score; ties go to the more recent record.
    pub fn retrieve_with(&self, scorer: &dyn EpisodeScorer, query: &str, k: usize) -> Vec<Retrieved> {
        if self.records.is_empty() || k == 0 {
            return Vec::new();
        }
        let docs: Vec<String> = self.records.iter().map(EpisodicRecord::indexed_text).collect();
        let scores = scorer.score(&docs, query);
        let mut order: Vec<usize> = (0..self.records.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b].total_cmp(&scores[a]).then(self.records[b].timestamp.cmp(&self.records[a].timestamp)).then(b.cmp(&a))
        });
        order.into_iter().take(k).map(|i| Retrieved { record: self.records[i].clone(), similarity: scores[i] }).collect()
    }
}

fn ends_with_newline(path: &Path) -> bool {
    use std::io::{Read, Seek, SeekFrom};
    let Ok(mut f) = std::fs::File::open(path) else { return true };
    let mut last = [0u8; 1];
    f.seek(SeekFrom::End(-1)).and_then(|_| f.read_exact(&mut last)).map(|_| last[0] == b'\n').unwrap_or(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn rec(instruction: &str, plan: &[&str], ts: u64) -> EpisodicRecord {
        EpisodicRecord {
            session_id: String::new(),
            timestamp: ts,
            instruction: instruction.into(),
            category: None,
            dialogue: vec![DialogueTurn { role: "user".into(), text: instruction.into() }],
            final_plan: plan.iter().map(|s| s.to_string()).collect(),
            outcome: Outcome::Success,
        }
    }

    #[test]
    fn self_query_scores_one() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = EpisodicStore::open(dir.path()).unwrap();
        s.store(rec("heat the test tube", &[], 1)).unwrap();
        let r = s.retrieve("heat the test tube", 3);
        assert_eq!(r.len(), 1);
        assert!((r[0].similarity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn instruction_query_ranks_its_episode_first() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = EpisodicStore::open(dir.path()).unwrap();
        s.store(rec("mix the solution", &["grasp flask", "shake flask"], 1)).unwrap();
        s.store(rec("light the alcohol lamp", &["twist lamp cap", "press igniter"], 2)).unwrap();
        assert_eq!(s.retrieve("light the alcohol lamp", 1)[0].record.instruction, "light the alcohol lamp");
    }

    #[test]
    fn empty_store_returns_nothing() {
        let dir = tempfile::tempdir().unwrap();
        assert!(EpisodicStore::open(dir.path()).unwrap().retrieve("anything", 3).is_empty());
    }

    #[test]
    fn acid_query_matches_hand_computed_cosine() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = EpisodicStore::open(dir.path()).unwrap();
        s.store(rec("titrate acid", &[], 1)).unwrap();
        s.store(rec("heat test tube", &[], 2)).unwrap();
        let r = s.retrieve("acid titration", 2);
        assert_eq!(r[0].record.instruction, "titrate acid");
        // N = 2. "titrate" and "acid" appear in one document each:
        // idf = ln(3/2) + 1. "titration" is unseen: idf = ln 3 + 1.
        let a = 1.5f64.ln() + 1.0;
        let b = 3f64.ln() + 1.0;
        let expected = (a * a) / ((2.0 * a * a).sqrt() * (a * a + b * b).sqrt());
        assert!((r[0].similarity - expected).abs() < 1e-12);
        assert_eq!(r[1].similarity, 0.0);
    }

    #[test]
    fn ties_prefer_recent_and_reads_follow_writes() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = EpisodicStore::open(dir.path()).unwrap();
        let a = s.store(rec("stir the beaker", &[], 5)).unwrap();
        let b = s.store(rec("stir the beaker", &[], 9)).unwrap();
        assert_ne!(a, b);
        let r = s.retrieve("stir", 2);
        assert_eq!(r[0].record.session_id, b);
        assert_eq!(r, s.retrieve("stir", 2));
    }

    #[test]
    fn corrupt_lines_are_skipped_on_open() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = EpisodicStore::open(dir.path()).unwrap();
        s.store(rec("open the lid", &[], 1)).unwrap();
        let path = s.path().to_path_buf();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("{not json\n\u{1}\u{2}garbage");
        std::fs::write(&path, text).unwrap();
        let mut s = EpisodicStore::open(dir.path()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.skipped(), 2);
        s.store(rec("close the lid", &[], 2)).unwrap();
        let s = EpisodicStore::open(dir.path()).unwrap();
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn duplicate_and_empty_dialogue_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = EpisodicStore::open(dir.path()).unwrap();
        let mut r = rec("weigh salt", &[], 1);
        r.session_id = "x".into();
        s.store(r.clone()).unwrap();
        assert!(matches!(s.store(r.clone()), Err(MemoryError::DuplicateSession(_))));
        r.session_id = "y".into();
        r.dialogue.clear();
        assert!(s.store(r).is_err());
    }
}
