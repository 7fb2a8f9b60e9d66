//! Per-indicator weight coefficients.
//!
//! Each indicator is scored by the ratio of its between-class variance to
//! its pooled within-class variance (a Fisher-style score) over the trusted
//! training sample. Scores are clamped to `[0, cap]` and rescaled so the
//! weights average to 1. If no indicator separates the classes at all, every
//! weight is exactly 1.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::indicators::LabeledVector;
use crate::stats::CompensatedSum;

pub const DEFAULT_EPSILON: f64 = 1e-9;
pub const DEFAULT_CAP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WeightingError {
    #[error("weights need at least two specialty classes, found {0}")]
    TooFewClasses(usize),
    #[error("indicator vector of user '{user_id}' has length {actual}, expected {expected}")]
    LengthMismatch {
        user_id: String,
        expected: usize,
        actual: usize,
    },
    #[error("epsilon must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error("cap must be positive and finite, got {0}")]
    BadCap(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub epsilon: f64,
    pub cap: f64,
}

impl WeightVector {
    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0; n],
            epsilon: DEFAULT_EPSILON,
            cap: DEFAULT_CAP,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Raw discriminative score per indicator, before clamping and rescaling.
pub fn fisher_scores(training: &[LabeledVector], epsilon: f64) -> Result<Vec<f64>, WeightingError> {
    let n_ind = training.first().map_or(0, |(v, _)| v.values.len());
    let mut class_of: HashMap<&str, usize> = HashMap::new();
    let mut members: Vec<Vec<&[f64]>> = Vec::new();
    for (vector, specialty) in training {
        if vector.values.len() != n_ind {
            return Err(WeightingError::LengthMismatch {
                user_id: vector.user_id.clone(),
                expected: n_ind,
                actual: vector.values.len(),
            });
        }
        let c = *class_of.entry(specialty.as_str()).or_insert_with(|| {
            members.push(Vec::new());
            members.len() - 1
        });
        members[c].push(&vector.values);
    }
    if members.len() < 2 {
        return Err(WeightingError::TooFewClasses(members.len()));
    }
    // Classes are visited in a label-sorted order so the result does not
    // depend on the order of the training sequence.
    let mut order: Vec<(&str, usize)> = class_of.into_iter().collect();
    order.sort_unstable();

    let total = training.len() as f64;
    let mut scores = Vec::with_capacity(n_ind);
    for i in 0..n_ind {
        let mut class_stats = Vec::with_capacity(order.len());
        let mut grand = CompensatedSum::default();
        for &(_, c) in &order {
            let mut values: Vec<f64> = members[c].iter().map(|v| v[i]).collect();
            values.sort_by(f64::total_cmp);
            let (mean, std) = crate::stats::mean_std(&values);
            let share = values.len() as f64 / total;
            grand.add(share * mean);
            class_stats.push((share, mean, std * std));
        }
        let grand_mean = grand.value();
        let mut between = CompensatedSum::default();
        let mut within = CompensatedSum::default();
        for &(share, mean, var) in &class_stats {
            between.add(share * (mean - grand_mean) * (mean - grand_mean));
            within.add(share * var);
        }
        scores.push(between.value() / (within.value() + epsilon));
    }
    Ok(scores)
}

pub fn compute_weights(
    training: &[LabeledVector],
    epsilon: f64,
    cap: f64,
) -> Result<WeightVector, WeightingError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(WeightingError::BadEpsilon(epsilon));
    }
    if !(cap.is_finite() && cap > 0.0) {
        return Err(WeightingError::BadCap(cap));
    }
    let scores: Vec<f64> = fisher_scores(training, epsilon)?
        .into_iter()
        .map(|s| s.clamp(0.0, cap))
        .collect();
    let n = scores.len();
    let total = crate::stats::sum(scores.iter().copied());
    let weights = if total > 0.0 {
        scores.iter().map(|s| s * n as f64 / total).collect()
    } else {
        vec![1.0; n]
    };
    Ok(WeightVector {
        weights,
        epsilon,
        cap,
    })
}
