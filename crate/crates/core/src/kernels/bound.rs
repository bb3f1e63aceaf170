use serde::{Deserialize, Serialize};

use super::nll::EntropyEstimate;

/// `1 − exp(−h)`, computed without cancellation for small `h`.
#[inline]
pub fn bound_from_entropy(h: f64) -> f64 {
    -(-h).exp_m1()
}

#[inline]
fn clamp_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Upper bounds on the probability that Bayes-rule decisions built on the
/// student and on a teacher differ. Differential entropy may be negative, in
/// which case the raw bound is negative; the clamped forms live in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementBound {
    pub per_teacher: Vec<f64>,
    pub per_teacher_clamped: Vec<f64>,
    /// `1 − exp(−h̄)`, the bound on the teacher-averaged disagreement.
    pub averaged: f64,
    pub averaged_clamped: f64,
}

pub fn disagreement_bound(h: &EntropyEstimate) -> DisagreementBound {
    let per_teacher: Vec<f64> = h.per_teacher.iter().map(|&hk| bound_from_entropy(hk)).collect();
    let averaged = bound_from_entropy(h.mean);
    DisagreementBound {
        per_teacher_clamped: per_teacher.iter().map(|&b| clamp_unit(b)).collect(),
        per_teacher,
        averaged,
        averaged_clamped: clamp_unit(averaged),
    }
}
