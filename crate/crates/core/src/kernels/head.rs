use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{Activation, Layer, Matrix, MlpParams, Parameters, Tape};

/// Numerically stable `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inverse(y: f64) -> f64 {
    // ln(e^y - 1) = y + ln(1 - e^-y)
    y + (-(-y).exp()).ln_1p()
}

/// Per-teacher kernel: maps a student embedding to the mean and diagonal
/// variance of a Gaussian over the teacher's embedding.
///
/// The MLP emits `2·d_k` values: the first `d_k` are the mean, the last `d_k`
/// are raw variances mapped through `softplus(raw) + var_floor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianHead {
    pub teacher: usize,
    pub mlp: MlpParams,
    pub var_floor: f64,
}

/// Result of [`GaussianHead::forward`].
#[derive(Debug, Clone)]
pub struct HeadOutput {
    pub mu: Matrix,
    pub var: Matrix,
    raw_var: Matrix,
    tape: Tape,
}

impl GaussianHead {
    /// Fresh head with `depth` layers of width `hidden` between the student
    /// embedding (`student_dim`) and the `2·teacher_dim` output.
    pub fn init<R: Rng + ?Sized>(
        teacher: usize,
        student_dim: usize,
        teacher_dim: usize,
        depth: usize,
        hidden: usize,
        var_floor: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Usage("head depth must be at least 1".into()));
        }
        let mut dims = vec![student_dim];
        dims.extend(std::iter::repeat_n(hidden, depth - 1));
        dims.push(2 * teacher_dim);
        Self::from_mlp(teacher, MlpParams::init(&dims, rng)?, var_floor)
    }

    pub fn from_mlp(teacher: usize, mlp: MlpParams, var_floor: f64) -> Result<Self> {
        if !mlp.output_dim().is_multiple_of(2) {
            return Err(Error::Usage(format!(
                "head output width must be even, got {}",
                mlp.output_dim()
            )));
        }
        if !(var_floor > 0.0 && var_floor.is_finite()) {
            return Err(Error::Usage(format!("var_floor must be positive, got {var_floor}")));
        }
        Ok(Self {
            teacher,
            mlp,
            var_floor,
        })
    }

    /// A single linear layer with `mu = s` and `var = 1` on every coordinate.
    /// Requires `d_k = d`.
    pub fn identity_unit_variance(teacher: usize, dim: usize, var_floor: f64) -> Result<Self> {
        let weights = Matrix::from_fn(dim, 2 * dim, |r, c| if r == c { 1.0 } else { 0.0 });
        let raw = softplus_inverse(1.0 - var_floor);
        let mut bias = vec![0.0; 2 * dim];
        bias[dim..].fill(raw);
        let mlp = MlpParams::from_layers(vec![Layer {
            weights,
            bias,
            activation: Activation::Identity,
        }])?;
        Self::from_mlp(teacher, mlp, var_floor)
    }

    pub fn student_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn teacher_dim(&self) -> usize {
        self.mlp.output_dim() / 2
    }

    pub fn forward(&self, s: &Matrix) -> Result<HeadOutput> {
        if s.cols() != self.student_dim() {
            return Err(Error::shape("head input", self.student_dim(), s.cols()));
        }
        let (out, tape) = self.mlp.forward(s)?;
        let dk = self.teacher_dim();
        let mu = out.col_range(0, dk);
        let raw_var = out.col_range(dk, 2 * dk);
        let floor = self.var_floor;
        let var = raw_var.map(|r| softplus(r) + floor);
        Ok(HeadOutput {
            mu,
            var,
            raw_var,
            tape,
        })
    }

    /// Chain `dL/dmu` and `dL/dvar` back to head parameters and the student embedding.
    pub fn backward(
        &self,
        out: &HeadOutput,
        grad_mu: &Matrix,
        grad_var: &Matrix,
    ) -> Result<(MlpParams, Matrix)> {
        let mut grad_raw = grad_var.clone();
        for (g, &r) in grad_raw
            .as_mut_slice()
            .iter_mut()
            .zip(out.raw_var.as_slice())
        {
            *g *= sigmoid(r);
        }
        let upstream = grad_mu.hstack(&grad_raw)?;
        self.mlp.backward(&out.tape, &upstream)
    }
}

impl Parameters for GaussianHead {
    fn tensors(&self) -> Vec<&[f64]> {
        self.mlp.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.mlp.tensors_mut()
    }
}

/// Free-function form of [`GaussianHead::forward`].
pub fn head_forward(head: &GaussianHead, s: &Matrix) -> Result<HeadOutput> {
    head.forward(s)
}
