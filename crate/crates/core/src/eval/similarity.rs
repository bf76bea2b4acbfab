use std::collections::HashMap;

use crate::text::tokenize;

/// Step-level semantic similarity in `[0, 1]`.
///
/// The default is [`TokenCosine`]; embedding-backed scorers can implement
/// this trait and be passed to the matcher instead.
pub trait StepSimilarity: Send + Sync {
    fn similarity(&self, a: &str, b: &str) -> f64;
}

/// Cosine similarity between lowercase token multisets.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenCosine;

impl StepSimilarity for TokenCosine {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        token_cosine(a, b)
    }
}

fn counts(text: &str) -> HashMap<String, f64> {
    let mut m = HashMap::new();
    for t in tokenize(text) {
        *m.entry(t).or_insert(0.0) += 1.0;
    }
    m
}

/// Token-multiset cosine. Returns 0 when either side has no tokens.
pub fn token_cosine(a: &str, b: &str) -> f64 {
    let ca = counts(a);
    let cb = counts(b);
    if ca.is_empty() || cb.is_empty() {
        return 0.0;
    }
    if ca == cb {
        return 1.0;
    }
    let dot: f64 = ca.iter().filter_map(|(k, x)| cb.get(k).map(|y| x * y)).sum();
    let na: f64 = ca.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = cb.values().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(0.0, 1.0)
}
