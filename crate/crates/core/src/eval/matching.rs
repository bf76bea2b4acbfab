//! Step alignment between a generated and a reference step sequence, and
//! the position-penalized normalized edit distance built on it.

use serde::{Deserialize, Serialize};

use super::similarity::{StepSimilarity, TokenCosine};
use super::EvalError;

/// A non-empty ordered list of non-empty steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct StepSequence(Vec<String>);

impl StepSequence {
    pub fn new<S: Into<String>>(steps: impl IntoIterator<Item = S>) -> Result<Self, EvalError> {
        let steps: Vec<String> = steps.into_iter().map(Into::into).collect();
        if steps.is_empty() {
            return Err(EvalError::EmptySequence);
        }
        if let Some(i) = steps.iter().position(|s| s.trim().is_empty()) {
            return Err(EvalError::EmptyStep(i));
        }
        Ok(Self(steps))
    }

    pub fn steps(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// All steps joined with a space, for the lexical ROUGE metrics.
    pub fn joined(&self) -> String {
        self.0.join(" ")
    }
}

impl TryFrom<Vec<String>> for StepSequence {
    type Error = EvalError;
    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<StepSequence> for Vec<String> {
    fn from(s: StepSequence) -> Self {
        s.0
    }
}

/// Alignment parameters. `sigma` scales the positional penalty and
/// `theta_match` is the minimum weighted similarity a pair needs to count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    pub sigma: f64,
    pub theta_match: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self { sigma: 0.2, theta_match: 0.3 }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(EvalError::InvalidSigma(self.sigma));
        }
        if !(0.0..=1.0).contains(&self.theta_match) {
            return Err(EvalError::InvalidTheta(self.theta_match));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub gen: usize,
    pub reference: usize,
    pub similarity: f64,
    pub pos_weight: f64,
    pub weighted: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchSet {
    /// Sorted by generated index.
    pub pairs: Vec<MatchedPair>,
    pub unmatched_gen: Vec<usize>,
    pub unmatched_ref: Vec<usize>,
}

impl MatchSet {
    /// Sum of weighted similarities, accumulated in ascending order so that
    /// two match sets with the same weights produce bit-identical sums.
    pub fn weighted_sum(&self) -> f64 {
        let mut w: Vec<f64> = self.pairs.iter().map(|p| p.weighted).collect();
        w.sort_by(f64::total_cmp);
        w.iter().sum()
    }
}

fn normalized_position(i: usize, len: usize) -> f64 {
    i as f64 / (len.saturating_sub(1).max(1)) as f64
}

/// `exp(-|i/(M-1) - j/(N-1)| / sigma)` with the denominators guarded by
/// `max(len-1, 1)` so single-step sequences sit at position 0.
pub fn positional_penalty(i: usize, j: usize, m: usize, n: usize, sigma: f64) -> Result<f64, EvalError> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(EvalError::InvalidSigma(sigma));
    }
    if m == 0 || n == 0 || i >= m || j >= n {
        return Err(EvalError::IndexOutOfRange { i, j, m, n });
    }
    let diff = (normalized_position(i, m) - normalized_position(j, n)).abs();
    Ok((-diff / sigma).exp())
}

/// Weighted similarity matrix `s_ij * Pos(i, j)`, rows = generated steps.
pub fn weighted_matrix(
    gen: &StepSequence,
    reference: &StepSequence,
    sim: &dyn StepSimilarity,
    sigma: f64,
) -> Result<Vec<Vec<(f64, f64)>>, EvalError> {
    let (m, n) = (gen.len(), reference.len());
    let mut out = Vec::with_capacity(m);
    for (i, g) in gen.steps().iter().enumerate() {
        let mut row = Vec::with_capacity(n);
        for (j, r) in reference.steps().iter().enumerate() {
            let s = sim.similarity(g, r).clamp(0.0, 1.0);
            row.push((s, positional_penalty(i, j, m, n, sigma)?));
        }
        out.push(row);
    }
    Ok(out)
}

/// Minimum-cost assignment of every row to a distinct column (Kuhn–Munkres
/// with potentials). Requires `rows <= cols`; returns the column per row.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "assignment needs rows <= cols");
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// One-to-one alignment maximizing the total weighted similarity. Pairs
/// whose weighted similarity falls below `theta_match` carry zero weight in
/// the assignment and are reported as unmatched.
pub fn match_steps_with(
    gen: &StepSequence,
    reference: &StepSequence,
    sim: &dyn StepSimilarity,
    params: MatchParams,
) -> Result<MatchSet, EvalError> {
    params.validate()?;
    let matrix = weighted_matrix(gen, reference, sim, params.sigma)?;
    let (m, n) = (gen.len(), reference.len());
    let retained = |i: usize, j: usize| {
        let (s, pos) = matrix[i][j];
        let w = s * pos;
        if w >= params.theta_match {
            w
        } else {
            0.0
        }
    };

    // Kuhn–Munkres wants rows <= cols; transpose when the generated side is longer.
    let assignment: Vec<(usize, usize)> = if m <= n {
        let cost: Vec<Vec<f64>> = (0..m).map(|i| (0..n).map(|j| -retained(i, j)).collect()).collect();
        min_cost_assignment(&cost).into_iter().enumerate().collect()
    } else {
        let cost: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| -retained(i, j)).collect()).collect();
        min_cost_assignment(&cost).into_iter().enumerate().map(|(j, i)| (i, j)).collect()
    };

    Ok(build_match_set(&matrix, assignment, params.theta_match))
}

/// Builds a [`MatchSet`] from a full assignment, keeping only pairs at or
/// above the threshold. Shared with the brute-force oracle in tests.
pub fn build_match_set(matrix: &[Vec<(f64, f64)>], assignment: Vec<(usize, usize)>, theta: f64) -> MatchSet {
    let m = matrix.len();
    let n = matrix.first().map_or(0, Vec::len);
    let mut pairs: Vec<MatchedPair> = assignment
        .into_iter()
        .filter_map(|(i, j)| {
            let (s, pos) = matrix[i][j];
            let w = s * pos;
            (w >= theta && w > 0.0).then_some(MatchedPair { gen: i, reference: j, similarity: s, pos_weight: pos, weighted: w })
        })
        .collect();
    pairs.sort_by_key(|p| p.gen);
    let unmatched_gen = (0..m).filter(|i| !pairs.iter().any(|p| p.gen == *i)).collect();
    let unmatched_ref = (0..n).filter(|j| !pairs.iter().any(|p| p.reference == *j)).collect();
    MatchSet { pairs, unmatched_gen, unmatched_ref }
}

pub fn match_steps(gen: &StepSequence, reference: &StepSequence, params: MatchParams) -> Result<MatchSet, EvalError> {
    match_steps_with(gen, reference, &TokenCosine, params)
}

/// `d_edit` from a match set: unmatched generated steps cost a full unit and
/// every unmatched reference step adds one more.
pub fn edit_distance_from(matches: &MatchSet, m: usize, n: usize) -> f64 {
    let cost = m as f64 - matches.weighted_sum() + (n - matches.pairs.len()) as f64;
    cost / m as f64
}

pub fn edit_distance_with(
    gen: &StepSequence,
    reference: &StepSequence,
    sim: &dyn StepSimilarity,
    params: MatchParams,
) -> Result<f64, EvalError> {
    let matches = match_steps_with(gen, reference, sim, params)?;
    Ok(edit_distance_from(&matches, gen.len(), reference.len()))
}

pub fn edit_distance(gen: &StepSequence, reference: &StepSequence, params: MatchParams) -> Result<f64, EvalError> {
    edit_distance_with(gen, reference, &TokenCosine, params)
}
