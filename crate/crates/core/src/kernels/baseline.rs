//! MSE and cosine feature-distillation baselines.
//!
//! When a teacher's width differs from the student's, the student embedding is
//! first mapped through a bias-free linear adapter owned by that teacher.

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::reduce::{order_invariant_mean, order_invariant_sum, order_invariant_sum_matrices};
use crate::error::{Error, Result};
use crate::numkit::{dot, Matrix, Parameters};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LossKind {
    Nll,
    Mse,
    Cosine { eps: f64 },
}

impl LossKind {
    pub const DEFAULT_COSINE_EPS: f64 = 1e-8;

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Nll => "nll",
            LossKind::Mse => "mse",
            LossKind::Cosine { .. } => "cosine",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LossKind::Cosine { eps } if !(eps > 0.0 && eps.is_finite()) => {
                Err(Error::Usage(format!("cosine eps must be positive, got {eps}")))
            }
            _ => Ok(()),
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nll" => Ok(LossKind::Nll),
            "mse" => Ok(LossKind::Mse),
            "cosine" => Ok(LossKind::Cosine {
                eps: Self::DEFAULT_COSINE_EPS,
            }),
            other => Err(Error::Usage(format!(
                "unknown loss '{other}', expected nll, mse or cosine"
            ))),
        }
    }
}

/// Student-side map into one teacher's space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Adapter {
    Identity,
    /// `d × d_k`, no bias.
    Linear(Matrix),
}

impl Adapter {
    /// Identity when the widths agree, otherwise a Glorot-initialized linear map.
    pub fn for_dims<R: Rng + ?Sized>(student_dim: usize, teacher_dim: usize, rng: &mut R) -> Self {
        if student_dim == teacher_dim {
            return Adapter::Identity;
        }
        let limit = (6.0 / (student_dim + teacher_dim) as f64).sqrt();
        Adapter::Linear(Matrix::from_fn(student_dim, teacher_dim, |_, _| {
            rng.random_range(-limit..limit)
        }))
    }

    pub fn apply(&self, s: &Matrix) -> Result<Matrix> {
        match self {
            Adapter::Identity => Ok(s.clone()),
            Adapter::Linear(w) => s.matmul(w),
        }
    }

    pub fn output_dim(&self, student_dim: usize) -> usize {
        match self {
            Adapter::Identity => student_dim,
            Adapter::Linear(w) => w.cols(),
        }
    }

    /// Gradient container with the same layout as `self`.
    pub fn zeros_like(&self) -> Self {
        match self {
            Adapter::Identity => Adapter::Identity,
            Adapter::Linear(w) => Adapter::Linear(Matrix::zeros(w.rows(), w.cols())),
        }
    }
}

impl Parameters for Adapter {
    fn tensors(&self) -> Vec<&[f64]> {
        match self {
            Adapter::Identity => vec![],
            Adapter::Linear(w) => vec![w.as_slice()],
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Adapter::Identity => vec![],
            Adapter::Linear(w) => vec![w.as_mut_slice()],
        }
    }
}

/// Baseline loss value and gradients.
#[derive(Debug, Clone)]
pub struct BaselineOutput {
    /// `total / (K · batch)`; the value that is optimized.
    pub loss: f64,
    /// Un-normalized `Σ_k Σ_b` form.
    pub total: f64,
    /// Per-teacher term averaged over the batch.
    pub per_teacher: Vec<f64>,
    /// Gradient of `loss` with respect to the student embedding.
    pub grad_s: Matrix,
    /// Gradient of `loss` with respect to each adapter.
    pub adapter_grads: Vec<Adapter>,
}

#[derive(Clone, Copy)]
enum Baseline {
    Mse,
    Cosine(f64),
}

/// Per-sample terms for one teacher, returning `(Σ_b term, dΣ/dpred)`.
fn teacher_terms(kind: Baseline, pred: &Matrix, target: &Matrix) -> (f64, Matrix) {
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    let mut total = 0.0;
    for b in 0..pred.rows() {
        let (p, t) = (pred.row(b), target.row(b));
        let g = grad.row_mut(b);
        match kind {
            Baseline::Mse => {
                for ((gi, &pi), &ti) in g.iter_mut().zip(p).zip(t) {
                    let d = pi - ti;
                    total += d * d;
                    *gi = 2.0 * d;
                }
            }
            Baseline::Cosine(eps) => {
                let np = dot(p, p).sqrt();
                let nt = dot(t, t).sqrt();
                let pt = dot(p, t);
                let denom = np * nt;
                if denom > eps {
                    total -= pt / denom;
                    // d cos / dp = t/(|p||t|) - (p·t) p / (|p|^3 |t|)
                    let c = pt / (np * np * denom);
                    for ((gi, &pi), &ti) in g.iter_mut().zip(p).zip(t) {
                        *gi = -(ti / denom - c * pi);
                    }
                } else {
                    total -= pt / eps;
                    for (gi, &ti) in g.iter_mut().zip(t) {
                        *gi = -ti / eps;
                    }
                }
            }
        }
    }
    (total, grad)
}

fn baseline(kind: Baseline, adapters: &[Adapter], s: &Matrix, teachers: &[Matrix]) -> Result<BaselineOutput> {
    if teachers.is_empty() {
        return Err(Error::Usage("at least one teacher is required".into()));
    }
    if adapters.len() != teachers.len() {
        return Err(Error::shape("adapters vs teachers", teachers.len(), adapters.len()));
    }
    let k = teachers.len() as f64;
    let batch = s.rows().max(1) as f64;
    let scale = 1.0 / (k * batch);

    let mut totals = Vec::with_capacity(teachers.len());
    let mut input_grads = Vec::with_capacity(teachers.len());
    let mut adapter_grads = Vec::with_capacity(teachers.len());
    for (adapter, t) in adapters.iter().zip(teachers) {
        if t.rows() != s.rows() {
            return Err(Error::shape("teacher batch", s.rows(), t.rows()));
        }
        let width = adapter.output_dim(s.cols());
        if t.cols() != width {
            return Err(Error::Usage(format!(
                "teacher width {} does not match student width {width}; a linear adapter is required",
                t.cols()
            )));
        }
        let pred = adapter.apply(s)?;
        let (total, grad_pred) = teacher_terms(kind, &pred, t);
        let grad_pred = grad_pred.scale(scale);
        match adapter {
            Adapter::Identity => {
                input_grads.push(grad_pred);
                adapter_grads.push(Adapter::Identity);
            }
            Adapter::Linear(w) => {
                adapter_grads.push(Adapter::Linear(s.t_matmul(&grad_pred)?));
                input_grads.push(grad_pred.matmul_t(w)?);
            }
        }
        totals.push(total);
    }
    let per_teacher: Vec<f64> = totals.iter().map(|t| t / batch).collect();
    let out = BaselineOutput {
        loss: order_invariant_mean(&per_teacher),
        total: order_invariant_sum(&totals),
        per_teacher,
        grad_s: order_invariant_sum_matrices(&input_grads),
        adapter_grads,
    };
    if !out.loss.is_finite() {
        return Err(Error::NonFinite("baseline loss".into()));
    }
    Ok(out)
}

/// `Σ_k Σ_b ‖s_b − t_kb‖²`, normalized by `K · batch` in `loss`. Every teacher
/// must have the student's width.
pub fn mse_loss(s: &Matrix, teachers: &[Matrix]) -> Result<BaselineOutput> {
    let adapters = vec![Adapter::Identity; teachers.len()];
    baseline(Baseline::Mse, &adapters, s, teachers)
}

/// `−Σ_k Σ_b cos(s_b, t_kb)` with denominator `max(‖s‖·‖t‖, eps)`.
pub fn cosine_loss(s: &Matrix, teachers: &[Matrix], eps: f64) -> Result<BaselineOutput> {
    LossKind::Cosine { eps }.validate()?;
    let adapters = vec![Adapter::Identity; teachers.len()];
    baseline(Baseline::Cosine(eps), &adapters, s, teachers)
}

/// MSE or cosine loss through per-teacher adapters.
pub fn adapted_loss(
    kind: LossKind,
    adapters: &[Adapter],
    s: &Matrix,
    teachers: &[Matrix],
) -> Result<BaselineOutput> {
    kind.validate()?;
    let b = match kind {
        LossKind::Mse => Baseline::Mse,
        LossKind::Cosine { eps } => Baseline::Cosine(eps),
        LossKind::Nll => {
            return Err(Error::Usage("nll uses Gaussian heads, not adapters".into()))
        }
    };
    baseline(b, adapters, s, teachers)
}
