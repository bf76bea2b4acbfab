use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(hits: usize, gen_total: usize, ref_total: usize) -> Self {
        if hits == 0 || gen_total == 0 || ref_total == 0 {
            return Self::default();
        }
        let precision = hits as f64 / gen_total as f64;
        let recall = hits as f64 / ref_total as f64;
        let f1 = 2.0 * precision * recall / (precision + recall);
        Self { precision, recall, f1 }
    }
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// ROUGE-N with clipped n-gram counts. Only n = 1 and n = 2 are supported.
pub fn rouge_n(gen: &str, reference: &str, n: usize) -> Result<Prf, EvalError> {
    if !(1..=2).contains(&n) {
        return Err(EvalError::UnsupportedNgram(n));
    }
    let g = tokenize(gen);
    let r = tokenize(reference);
    let gc = ngrams(&g, n);
    let rc = ngrams(&r, n);
    let hits: usize = gc.iter().map(|(k, c)| (*c).min(*rc.get(k).unwrap_or(&0))).sum();
    Ok(Prf::from_counts(hits, gc.values().sum(), rc.values().sum()))
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L: longest-common-subsequence precision, recall and F1.
pub fn rouge_l(gen: &str, reference: &str) -> Prf {
    let g = tokenize(gen);
    let r = tokenize(reference);
    Prf::from_counts(lcs_len(&g, &r), g.len(), r.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_disjoint() {
        let p = rouge_n("open the bottle", "open the bottle", 2).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        assert_eq!(rouge_l("a b", "c d"), Prf::default());
        assert_eq!(rouge_n("a b", "c d", 1).unwrap(), Prf::default());
    }

    #[test]
    fn empty_after_tokenization_scores_zero() {
        assert_eq!(rouge_n("", "a b", 1).unwrap(), Prf::default());
        assert_eq!(rouge_n("a", "a", 2).unwrap(), Prf::default());
        assert_eq!(rouge_l("!!", "a"), Prf::default());
    }

    #[test]
    fn unsupported_n() {
        assert!(matches!(rouge_n("a", "a", 3), Err(EvalError::UnsupportedNgram(3))));
    }

    #[test]
    fn clipping() {
        // gen has "the" three times, ref once -> one hit
        let p = rouge_n("the the the", "the cat", 1).unwrap();
        assert!((p.precision - 1.0 / 3.0).abs() < 1e-12);
        assert!((p.recall - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lcs_basic() {
        let a: Vec<char> = "abcbdab".chars().collect();
        let b: Vec<char> = "bdcaba".chars().collect();
        assert_eq!(lcs_len(&a, &b), 4);
    }
}
