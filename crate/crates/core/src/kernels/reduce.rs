//! Reductions over teachers whose result does not depend on teacher order.
//! Values are summed in sorted order, so any permutation of the inputs
//! yields the same bits.

use crate::numkit::Matrix;

pub fn order_invariant_sum(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum()
}

pub fn order_invariant_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    order_invariant_sum(values) / values.len() as f64
}

/// Elementwise sum of equally shaped matrices.
pub fn order_invariant_sum_matrices(mats: &[Matrix]) -> Matrix {
    let (rows, cols) = mats[0].shape();
    if mats.len() == 1 {
        return mats[0].clone();
    }
    let mut out = Matrix::zeros(rows, cols);
    let mut scratch = vec![0.0; mats.len()];
    for (i, o) in out.as_mut_slice().iter_mut().enumerate() {
        for (s, m) in scratch.iter_mut().zip(mats) {
            *s = m.as_slice()[i];
        }
        scratch.sort_by(f64::total_cmp);
        *o = scratch.iter().sum();
    }
    out
}
