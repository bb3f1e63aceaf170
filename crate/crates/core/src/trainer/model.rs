use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::kernels::{
    adapted_loss, gaussian_nll, gaussian_nll_value, Adapter, EntropyEstimate, GaussianHead,
    LossKind,
};
use crate::numkit::{Matrix, MlpParams, Parameters};

/// Teacher-side parameters: Gaussian kernels for the NLL objective, linear
/// adapters for the baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Heads {
    Gaussian(Vec<GaussianHead>),
    Adapters(Vec<Adapter>),
}

impl Heads {
    pub fn len(&self) -> usize {
        match self {
            Heads::Gaussian(h) => h.len(),
            Heads::Adapters(a) => a.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn params(&self) -> Vec<&dyn Parameters> {
        match self {
            Heads::Gaussian(h) => h.iter().map(|x| x as &dyn Parameters).collect(),
            Heads::Adapters(a) => a.iter().map(|x| x as &dyn Parameters).collect(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut dyn Parameters> {
        match self {
            Heads::Gaussian(h) => h.iter_mut().map(|x| x as &mut dyn Parameters).collect(),
            Heads::Adapters(a) => a.iter_mut().map(|x| x as &mut dyn Parameters).collect(),
        }
    }
}

/// Student network plus one head per teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillModel {
    pub student: MlpParams,
    pub heads: Heads,
}

/// Loss, per-teacher terms and gradients from one batch.
#[derive(Debug, Clone)]
pub struct StepGradients {
    pub loss: f64,
    pub per_teacher: Vec<f64>,
    pub student: MlpParams,
    pub heads: Heads,
}

impl DistillModel {
    pub fn init<R: Rng + ?Sized>(
        config: &TrainConfig,
        input_dim: usize,
        teacher_dims: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let student = MlpParams::init(&config.student_dims(input_dim), rng)?;
        let heads = match config.loss {
            LossKind::Nll => Heads::Gaussian(
                teacher_dims
                    .iter()
                    .enumerate()
                    .map(|(k, &dk)| {
                        GaussianHead::init(
                            k,
                            config.student_dim,
                            dk,
                            config.head_depth,
                            config.head_hidden,
                            config.var_floor,
                            rng,
                        )
                    })
                    .collect::<Result<_>>()?,
            ),
            LossKind::Mse | LossKind::Cosine { .. } => Heads::Adapters(
                teacher_dims
                    .iter()
                    .map(|&dk| Adapter::for_dims(config.student_dim, dk, rng))
                    .collect(),
            ),
        };
        Ok(Self { student, heads })
    }

    pub fn embed(&self, x: &Matrix) -> Result<Matrix> {
        self.student.predict(x)
    }

    /// Forward and backward through student and heads for one batch.
    pub fn gradients(&self, loss: LossKind, x: &Matrix, teachers: &[Matrix]) -> Result<StepGradients> {
        let (s, tape) = self.student.forward(x)?;
        let (value, per_teacher, grad_s, head_grads) = match (&self.heads, loss) {
            (Heads::Gaussian(heads), LossKind::Nll) => {
                let out = gaussian_nll(heads, &s, teachers)?;
                let grads = heads
                    .iter()
                    .zip(out.head_grads)
                    .map(|(h, g)| GaussianHead {
                        teacher: h.teacher,
                        mlp: g,
                        var_floor: h.var_floor,
                    })
                    .collect();
                (out.loss, out.entropy.per_teacher, out.grad_s, Heads::Gaussian(grads))
            }
            (Heads::Adapters(adapters), LossKind::Mse | LossKind::Cosine { .. }) => {
                let out = adapted_loss(loss, adapters, &s, teachers)?;
                (out.loss, out.per_teacher, out.grad_s, Heads::Adapters(out.adapter_grads))
            }
            _ => return Err(Error::State(format!("heads do not match loss '{}'", loss.name()))),
        };
        let (student, _) = self.student.backward(&tape, &grad_s)?;
        Ok(StepGradients {
            loss: value,
            per_teacher,
            student,
            heads: head_grads,
        })
    }

    /// Loss and per-teacher terms without gradients. For the NLL objective the
    /// terms are the conditional entropy estimates `h_k`.
    pub fn evaluate(&self, loss: LossKind, x: &Matrix, teachers: &[Matrix]) -> Result<(f64, EntropyEstimate)> {
        let s = self.student.predict(x)?;
        match (&self.heads, loss) {
            (Heads::Gaussian(heads), LossKind::Nll) => {
                let h = gaussian_nll_value(heads, &s, teachers)?;
                Ok((h.mean, h))
            }
            (Heads::Adapters(adapters), LossKind::Mse | LossKind::Cosine { .. }) => {
                let out = adapted_loss(loss, adapters, &s, teachers)?;
                Ok((out.loss, EntropyEstimate::from_terms(out.per_teacher, x.rows())))
            }
            _ => Err(Error::State(format!("heads do not match loss '{}'", loss.name()))),
        }
    }
}
