//! Frequency profiles over the episodic store: which lab terms recur and
//! how often each experiment category succeeds.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{EpisodicRecord, EpisodicStore, Outcome};
use crate::text::lab_terms_in;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CategoryProfile {
    pub episodes: usize,
    pub successes: usize,
    pub failures: usize,
    pub aborted: usize,
    pub success_rate: f64,
    /// Episodes in this category mentioning each term.
    pub terms: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PreferenceProfile {
    pub episodes: usize,
    /// Episodes mentioning each term anywhere (instruction, plan, dialogue).
    pub terms: BTreeMap<String, usize>,
    pub categories: BTreeMap<String, CategoryProfile>,
}

const UNCATEGORIZED: &str = "uncategorized";

fn episode_terms(r: &EpisodicRecord) -> Vec<&'static str> {
    let mut text = r.indexed_text();
    for turn in &r.dialogue {
        text.push('\n');
        text.push_str(&turn.text);
    }
    lab_terms_in(&text)
}

pub fn extract_profile(store: &EpisodicStore) -> PreferenceProfile {
    let mut p = PreferenceProfile { episodes: store.len(), ..Default::default() };
    for r in store.records() {
        let cat = p.categories.entry(r.category.clone().unwrap_or_else(|| UNCATEGORIZED.into())).or_default();
        cat.episodes += 1;
        match r.outcome {
            Outcome::Success => cat.successes += 1,
            Outcome::Failure => cat.failures += 1,
            Outcome::Aborted => cat.aborted += 1,
        }
        for t in episode_terms(r) {
            *cat.terms.entry(t.to_string()).or_default() += 1;
            *p.terms.entry(t.to_string()).or_default() += 1;
        }
    }
    for cat in p.categories.values_mut() {
        cat.success_rate = cat.successes as f64 / cat.episodes as f64;
    }
    p
}
