use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::{Dataset, DatasetError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryStats {
    pub episodes: usize,
    pub frames: usize,
    pub segments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub episodes: usize,
    pub frames: usize,
    pub mean_frames: f64,
    pub segments: usize,
    pub per_category: BTreeMap<String, CategoryStats>,
}

/// Counts over the episodes whose category passes `filter` (all when `None`).
/// Categories without episodes do not appear.
pub fn dataset_stats(dataset: &Dataset, filter: Option<&[String]>) -> Result<DatasetStats, DatasetError> {
    let selected: Vec<_> =
        dataset.episodes.iter().filter(|ep| filter.is_none_or(|f| f.iter().any(|c| *c == ep.meta.category))).collect();
    if selected.is_empty() {
        return Err(DatasetError::Data("no episodes selected".into()));
    }
    let mut per_category: BTreeMap<String, CategoryStats> = BTreeMap::new();
    for ep in &selected {
        let c = per_category.entry(ep.meta.category.clone()).or_insert(CategoryStats { episodes: 0, frames: 0, segments: 0 });
        c.episodes += 1;
        c.frames += ep.len();
        c.segments += ep.segments.len();
    }
    let frames: usize = selected.iter().map(|ep| ep.len()).sum();
    Ok(DatasetStats {
        episodes: selected.len(),
        frames,
        mean_frames: frames as f64 / selected.len() as f64,
        segments: selected.iter().map(|ep| ep.segments.len()).sum(),
        per_category,
    })
}

impl DatasetStats {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,episodes,frames,mean_frames,segments\n");
        for (name, c) in &self.per_category {
            let _ = writeln!(out, "{name},{},{},{:.1},{}", c.episodes, c.frames, c.frames as f64 / c.episodes as f64, c.segments);
        }
        let _ = writeln!(out, "all,{},{},{:.1},{}", self.episodes, self.frames, self.mean_frames, self.segments);
        out
    }
}
