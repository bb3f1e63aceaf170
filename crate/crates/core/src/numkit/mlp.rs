//! Feed-forward MLP with an explicit tape for reverse-mode gradients.
//!
//! Layer weights are stored `in × out` so a batch forward pass is
//! `z = x · W + b`. Hidden layers use the rectifier; the last layer is linear.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::Parameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative; the rectifier uses subgradient 0 at the kink.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `in × out`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

/// Cached activations from a forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// Input to each layer.
    inputs: Vec<Matrix>,
    /// Pre-activation of each layer.
    pre: Vec<Matrix>,
    layer_dims: Vec<(usize, usize)>,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.inputs.first().map_or(0, Matrix::rows)
    }

    /// Smallest |pre-activation| over rectifier layers, used to keep
    /// finite-difference probes away from kinks.
    pub fn min_abs_hidden_preactivation(&self) -> f64 {
        let hidden = self.pre.len().saturating_sub(1);
        self.pre[..hidden]
            .iter()
            .flat_map(|m| m.as_slice().iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

impl MlpParams {
    /// Build from explicit layers; dims must chain and there must be at least one layer.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Usage("an MLP needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::shape("layer bias", layer.out_dim(), layer.bias.len()));
            }
            if i + 1 < layers.len() && layer.out_dim() != layers[i + 1].in_dim() {
                return Err(Error::shape(
                    "layer chaining",
                    layer.out_dim(),
                    layers[i + 1].in_dim(),
                ));
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-uniform weights, zero biases, rectifier between layers, linear output.
    ///
    /// `dims` lists every width from input to output, so `[4, 8, 2]` is two layers.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Usage(format!(
                "MLP dims must include input and output, got {dims:?}"
            )));
        }
        if dims.contains(&0) {
            return Err(Error::Usage(format!("MLP dims must be positive, got {dims:?}")));
        }
        let n_layers = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights =
                    Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..limit));
                Layer {
                    weights,
                    bias: vec![0.0; fan_out],
                    activation: if i + 1 == n_layers {
                        Activation::Identity
                    } else {
                        Activation::Relu
                    },
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// All-zero network with the standard activation layout for `dims`.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let mut net = Self::init(dims, &mut crate::rng::stream(0, 0))?;
        net.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        Ok(net)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Width of every layer boundary, input first.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::out_dim))
            .collect()
    }

    /// Same architecture, all parameters zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: Matrix::zeros(l.in_dim(), l.out_dim()),
                    bias: vec![0.0; l.out_dim()],
                    activation: l.activation,
                })
                .collect(),
        }
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.in_dim(), l.out_dim())).collect()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, Tape)> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape("mlp input", self.input_dim(), x.cols()));
        }
        x.check_finite("mlp input")?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for layer in &self.layers {
            let mut z = current.matmul(&layer.weights)?;
            z.add_row_vector(&layer.bias);
            let a = match layer.activation {
                Activation::Identity => z.clone(),
                act => z.map(|v| act.apply(v)),
            };
            inputs.push(current);
            pre.push(z);
            current = a;
        }
        Ok((
            current,
            Tape {
                inputs,
                pre,
                layer_dims: self.layer_dims(),
            },
        ))
    }

    /// Forward pass without keeping the tape.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape("mlp input", self.input_dim(), x.cols()));
        }
        x.check_finite("mlp input")?;
        let mut current: Option<Matrix> = None;
        for layer in &self.layers {
            let mut z = current.as_ref().unwrap_or(x).matmul(&layer.weights)?;
            z.add_row_vector(&layer.bias);
            if layer.activation != Activation::Identity {
                z = z.map(|v| layer.activation.apply(v));
            }
            current = Some(z);
        }
        Ok(current.expect("at least one layer"))
    }

    /// Reverse pass. Returns parameter gradients (same shape as `self`) and the
    /// gradient with respect to the forward input.
    pub fn backward(&self, tape: &Tape, upstream: &Matrix) -> Result<(MlpParams, Matrix)> {
        if tape.layer_dims != self.layer_dims() {
            return Err(Error::State(format!(
                "tape recorded for layers {:?}, params have {:?}",
                tape.layer_dims,
                self.layer_dims()
            )));
        }
        let batch = tape.batch();
        if upstream.shape() != (batch, self.output_dim()) {
            return Err(Error::shape(
                "mlp upstream gradient",
                format!("{batch}x{}", self.output_dim()),
                format!("{}x{}", upstream.rows(), upstream.cols()),
            ));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation != Activation::Identity {
                let pre = tape.pre[l].as_slice();
                for (d, &z) in delta.as_mut_slice().iter_mut().zip(pre) {
                    *d *= layer.activation.derivative(z);
                }
            }
            let weight_grad = tape.inputs[l].t_matmul(&delta)?;
            let bias_grad = delta.column_sums();
            let next = delta.matmul_t(&layer.weights)?;
            grads.push(Layer {
                weights: weight_grad,
                bias: bias_grad,
                activation: layer.activation,
            });
            delta = next;
        }
        grads.reverse();
        let grads = MlpParams { layers: grads };
        debug_assert_eq!(grads.layer_dims(), self.layer_dims(), "gradient shape closure");
        debug_assert_eq!(delta.shape(), (batch, self.input_dim()));
        Ok((grads, delta))
    }
}

impl Parameters for MlpParams {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}
