use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators for one parameter set. Moment tensors mirror the
/// parameter tensors one-to-one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<P: Parameters + ?Sized>(params: &P, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            config,
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    fn check_shapes(&self, tensors: &[&[f64]], what: &'static str) -> Result<()> {
        let expected: Vec<usize> = self.first_moment.iter().map(Vec::len).collect();
        let actual: Vec<usize> = tensors.iter().map(|t| t.len()).collect();
        if expected != actual {
            return Err(Error::shape(what, format!("{expected:?}"), format!("{actual:?}")));
        }
        Ok(())
    }

    /// One bias-corrected Adam update. Gradients are validated before anything
    /// is mutated, so a non-finite gradient leaves params and state untouched.
    pub fn step<P: Parameters + ?Sized>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grad_tensors = grads.tensors();
        self.check_shapes(&grad_tensors, "adam gradients")?;
        self.check_shapes(&params.tensors(), "adam parameters")?;
        if grad_tensors.iter().any(|t| t.iter().any(|g| !g.is_finite())) {
            return Err(Error::NonFinite("adam gradient".into()));
        }

        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);

        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grad_tensors)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A bare vector of scalars as a parameter set.
    #[derive(Clone, Debug, PartialEq)]
    struct Flat(Vec<f64>);

    impl Parameters for Flat {
        fn tensors(&self) -> Vec<&[f64]> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = Flat(vec![0.3, -1.2, 4.0]);
        let before = p.clone();
        let mut s = AdamState::new(&p, AdamConfig::with_lr(0.1));
        for _ in 0..5 {
            s.step(&mut p, &Flat(vec![0.0; 3])).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(s.step, 5);
        assert!(s.first_moment[0].iter().chain(&s.second_moment[0]).all(|&v| v == 0.0));
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = Flat(vec![0.0]);
        let mut s = AdamState::new(&p, AdamConfig::with_lr(0.1));
        s.step(&mut p, &Flat(vec![0.5])).unwrap();
        // m_hat = 0.5, v_hat = 0.25, step = 0.1 * 0.5 / (0.5 + 1e-8)
        let expected = -0.1 * 0.5 / (0.5 + 1e-8);
        assert!((p.0[0] - expected).abs() < 1e-15);
        assert!((p.0[0] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn second_identical_step_is_not_larger() {
        let mut p = Flat(vec![0.0]);
        let mut s = AdamState::new(&p, AdamConfig::with_lr(0.1));
        s.step(&mut p, &Flat(vec![0.5])).unwrap();
        let d1 = p.0[0];
        s.step(&mut p, &Flat(vec![0.5])).unwrap();
        let d2 = p.0[0] - d1;
        assert!(d2.abs() <= d1.abs() + 1e-12);
    }

    #[test]
    fn rejects_bad_gradients_without_mutation() {
        let mut p = Flat(vec![1.0, 2.0]);
        let mut s = AdamState::new(&p, AdamConfig::default());
        assert!(matches!(
            s.step(&mut p, &Flat(vec![f64::NAN, 0.0])),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(s.step(&mut p, &Flat(vec![0.0])), Err(Error::Shape { .. })));
        assert_eq!(p.0, vec![1.0, 2.0]);
        assert_eq!(s.step, 0);
    }
}
