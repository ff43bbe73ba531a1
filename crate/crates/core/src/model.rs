//! Model and update vectors exchanged between devices and the server.

use serde::{Deserialize, Serialize};

/// Linear classifier parameters: `heads` one-vs-rest weight vectors, each of
/// length `features + 1` (trailing bias), stored head-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVector {
    heads: usize,
    features: usize,
    weights: Vec<f64>,
}

impl ModelVector {
    pub fn zeros(heads: usize, features: usize) -> Self {
        Self {
            heads,
            features,
            weights: vec![0.0; heads * (features + 1)],
        }
    }

    pub fn from_weights(heads: usize, features: usize, weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), heads * (features + 1), "weight length mismatch");
        Self {
            heads,
            features,
            weights,
        }
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Weights and bias of one head.
    pub fn head(&self, c: usize) -> &[f64] {
        let stride = self.features + 1;
        &self.weights[c * stride..(c + 1) * stride]
    }

    pub fn add_assign(&mut self, delta: &[f64]) {
        assert_eq!(delta.len(), self.weights.len(), "delta length mismatch");
        for (w, d) in self.weights.iter_mut().zip(delta) {
            *w += d;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }
}

/// One device's model change after local training.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub delta: Vec<f64>,
    pub sample_count: usize,
}

/// Weights `n_k / sum_j n_j`.
pub fn sample_weights(updates: &[LocalUpdate]) -> Vec<f64> {
    let total: usize = updates.iter().map(|u| u.sample_count).sum();
    updates
        .iter()
        .map(|u| u.sample_count as f64 / total as f64)
        .collect()
}

/// Exact `sum_k w_k delta_k`.
pub fn weighted_average(updates: &[LocalUpdate], weights: &[f64]) -> Vec<f64> {
    let d = updates.first().map_or(0, |u| u.delta.len());
    let mut out = vec![0.0; d];
    for (u, &w) in updates.iter().zip(weights) {
        for (o, x) in out.iter_mut().zip(&u.delta) {
            *o += w * x;
        }
    }
    out
}
