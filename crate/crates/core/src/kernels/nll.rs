use serde::{Deserialize, Serialize};

use super::head::GaussianHead;
use super::reduce::{order_invariant_mean, order_invariant_sum_matrices};
use crate::error::{Error, Result};
use crate::numkit::{Matrix, MlpParams};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Per-teacher conditional entropy estimates in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    /// Mean negative log-likelihood of each teacher, `h_k`.
    pub per_teacher: Vec<f64>,
    /// `(1/K) Σ h_k`.
    pub mean: f64,
    pub samples: usize,
}

impl EntropyEstimate {
    pub fn from_terms(per_teacher: Vec<f64>, samples: usize) -> Self {
        let mean = order_invariant_mean(&per_teacher);
        Self {
            per_teacher,
            mean,
            samples,
        }
    }
}

/// Loss value, entropy breakdown and exact gradients of the averaged NLL.
#[derive(Debug, Clone)]
pub struct NllOutput {
    pub loss: f64,
    pub entropy: EntropyEstimate,
    pub grad_s: Matrix,
    pub head_grads: Vec<MlpParams>,
}

fn check_inputs(heads: &[GaussianHead], s: &Matrix, teachers: &[Matrix]) -> Result<()> {
    if heads.is_empty() {
        return Err(Error::Usage("at least one teacher is required".into()));
    }
    if heads.len() != teachers.len() {
        return Err(Error::shape("heads vs teachers", heads.len(), teachers.len()));
    }
    for (head, t) in heads.iter().zip(teachers) {
        if t.rows() != s.rows() {
            return Err(Error::shape("teacher batch", s.rows(), t.rows()));
        }
        if t.cols() != head.teacher_dim() {
            return Err(Error::shape("teacher dim", head.teacher_dim(), t.cols()));
        }
    }
    Ok(())
}

/// Sum over the batch of the diagonal-Gaussian NLL, returning
/// `(total, dtotal/dmu, dtotal/dvar)`.
fn gaussian_terms(mu: &Matrix, var: &Matrix, target: &Matrix) -> (f64, Matrix, Matrix) {
    let mut total = 0.0;
    let mut grad_mu = Matrix::zeros(mu.rows(), mu.cols());
    let mut grad_var = Matrix::zeros(mu.rows(), mu.cols());
    let it = mu
        .as_slice()
        .iter()
        .zip(var.as_slice())
        .zip(target.as_slice())
        .zip(grad_mu.as_mut_slice().iter_mut().zip(grad_var.as_mut_slice()));
    for (((&m, &v), &t), (gm, gv)) in it {
        let diff = t - m;
        let inv = 1.0 / v;
        total += HALF_LN_2PI + 0.5 * v.ln() + 0.5 * diff * diff * inv;
        *gm = -diff * inv;
        *gv = 0.5 * inv - 0.5 * diff * diff * inv * inv;
    }
    (total, grad_mu, grad_var)
}

/// Averaged Gaussian negative log-likelihood of the teachers given the student:
///
/// `loss = (1/K) Σ_k mean_b Σ_i [ ½ ln(2π σ²_ki) + (t_ki − μ_ki)² / (2σ²_ki) ]`
///
/// Reductions across teachers are order-invariant, so permuting
/// `(heads, teachers)` together gives bit-identical results.
pub fn gaussian_nll(heads: &[GaussianHead], s: &Matrix, teachers: &[Matrix]) -> Result<NllOutput> {
    check_inputs(heads, s, teachers)?;
    let k = heads.len() as f64;
    let batch = s.rows().max(1) as f64;
    let scale = 1.0 / (k * batch);

    let mut per_teacher = Vec::with_capacity(heads.len());
    let mut head_grads = Vec::with_capacity(heads.len());
    let mut input_grads = Vec::with_capacity(heads.len());
    for (head, t) in heads.iter().zip(teachers) {
        let out = head.forward(s)?;
        let (total, grad_mu, grad_var) = gaussian_terms(&out.mu, &out.var, t);
        per_teacher.push(total / batch);
        let (g_head, g_s) = head.backward(&out, &grad_mu.scale(scale), &grad_var.scale(scale))?;
        head_grads.push(g_head);
        input_grads.push(g_s);
    }
    let entropy = EntropyEstimate::from_terms(per_teacher, s.rows());
    if !entropy.mean.is_finite() {
        return Err(Error::NonFinite("gaussian nll".into()));
    }
    Ok(NllOutput {
        loss: entropy.mean,
        entropy,
        grad_s: order_invariant_sum_matrices(&input_grads),
        head_grads,
    })
}

/// Forward-only evaluation of [`gaussian_nll`].
pub fn gaussian_nll_value(
    heads: &[GaussianHead],
    s: &Matrix,
    teachers: &[Matrix],
) -> Result<EntropyEstimate> {
    check_inputs(heads, s, teachers)?;
    let batch = s.rows().max(1) as f64;
    let mut per_teacher = Vec::with_capacity(heads.len());
    for (head, t) in heads.iter().zip(teachers) {
        let out = head.forward(s)?;
        let (total, _, _) = gaussian_terms(&out.mu, &out.var, t);
        per_teacher.push(total / batch);
    }
    let entropy = EntropyEstimate::from_terms(per_teacher, s.rows());
    if !entropy.mean.is_finite() {
        return Err(Error::NonFinite("gaussian nll".into()));
    }
    Ok(entropy)
}
