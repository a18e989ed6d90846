//! Correlation scores, the uniform anchor vector and explore-exploit top-k selection.

use serde::{Deserialize, Serialize};

use crate::embedkit::linspace_round;
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionSource {
    Predicted,
    GroundTruth,
    /// Evenly spaced frames; used when no labels or scores are available.
    Uniform,
}

/// Selected frame indices, sorted ascending and distinct.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyFrameSelection {
    pub indices: Vec<usize>,
    pub source: SelectionSource,
}

impl KeyFrameSelection {
    pub fn new(mut indices: Vec<usize>, source: SelectionSource, frames: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("selection contains duplicate frames"));
        }
        if indices.last().is_some_and(|&i| i >= frames) {
            return Err(invalid(format!("selection index out of range for {frames} frames")));
        }
        Ok(Self { indices, source })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationScores {
    pub s: Vec<f64>,
    pub mixed: Vec<f64>,
    pub anchors: Vec<usize>,
    pub alpha: f64,
    pub k: usize,
}

/// `dedup(round(linspace(0, N−1, k)))`, ascending.
pub fn anchor_set(n: usize, k: usize) -> Result<Vec<usize>> {
    if k < 1 {
        return Err(invalid("k must be at least 1"));
    }
    if n < 1 {
        return Err(invalid("N must be at least 1"));
    }
    let mut a = linspace_round(0.0, (n - 1) as f64, k.min(n));
    a.dedup();
    Ok(a)
}

/// `u[i] = alpha` on the anchor set, 0 elsewhere.
pub fn anchor_vector(n: usize, k: usize, alpha: f64) -> Result<(Vec<f64>, Vec<usize>)> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(invalid(format!("alpha must be finite and non-negative, got {alpha}")));
    }
    let anchors = anchor_set(n, k)?;
    let mut u = vec![0.0; n];
    for &i in &anchors {
        u[i] = alpha;
    }
    Ok((u, anchors))
}

/// `softmax(Ē · p / temperature)` for `Ē` given as `N` rows of width `C`.
pub fn correlation_scores(ebar: &[f64], n: usize, pointer: &[f64], temperature: f64) -> Result<Vec<f64>> {
    let c = pointer.len();
    if n == 0 || ebar.len() != n * c {
        return Err(invalid(format!("expected {n} state rows of width {c}")));
    }
    if !(temperature > 0.0) {
        return Err(invalid("temperature must be positive"));
    }
    let logits: Vec<f64> = ebar
        .chunks(c)
        .map(|row| row.iter().zip(pointer).map(|(a, b)| a * b).sum::<f64>() / temperature)
        .collect();
    Ok(softmax(&logits))
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

/// Top-`k` indices of `s + u` (ties to the lowest index), returned ascending.
pub fn mix_and_select(s: &[f64], u: &[f64], k: usize) -> Result<KeyFrameSelection> {
    if s.len() != u.len() {
        return Err(invalid(format!("score length {} vs anchor length {}", s.len(), u.len())));
    }
    let mixed: Vec<f64> = s.iter().zip(u).map(|(a, b)| a + b).collect();
    Ok(KeyFrameSelection { indices: top_k(&mixed, k), source: SelectionSource::Predicted })
}

/// Indices of the `k` largest values, ties to the lowest index, sorted ascending.
pub fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(k.min(values.len()));
    order.sort_unstable();
    order
}

/// Full scoring pass over given `s`: anchors, mixing and selection.
pub fn score_and_select(s: Vec<f64>, k: usize, alpha: f64) -> Result<(CorrelationScores, KeyFrameSelection)> {
    let (u, anchors) = anchor_vector(s.len(), k, alpha)?;
    let selection = mix_and_select(&s, &u, k)?;
    let mixed = s.iter().zip(&u).map(|(a, b)| a + b).collect();
    Ok((CorrelationScores { s, mixed, anchors, alpha, k }, selection))
}

/// Evenly spaced selection of `min(k, N)` frames.
pub fn uniform_selection(n: usize, k: usize) -> Result<KeyFrameSelection> {
    Ok(KeyFrameSelection { indices: anchor_set(n, k)?, source: SelectionSource::Uniform })
}
