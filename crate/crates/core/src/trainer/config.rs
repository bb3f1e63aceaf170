use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernels::LossKind;

/// Hyperparameters of one distillation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub loss: LossKind,
    /// Hidden widths of the student MLP.
    pub student_hidden: Vec<usize>,
    /// Student embedding width `d`.
    pub student_dim: usize,
    /// Layers per Gaussian head.
    pub head_depth: usize,
    pub head_hidden: usize,
    pub var_floor: f64,
    /// Fraction of the distillation data held out for validation loss.
    pub val_fraction: f64,
    /// Emit a checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 50,
            batch_size: 128,
            lr: 1e-3,
            loss: LossKind::Nll,
            student_hidden: vec![256, 128],
            student_dim: 64,
            head_depth: 3,
            head_hidden: 256,
            var_floor: 1e-6,
            val_fraction: 0.1,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Usage(m));
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail(format!("learning rate must be finite and non-negative, got {}", self.lr));
        }
        if self.student_dim == 0 || self.student_hidden.contains(&0) {
            return fail("student widths must be positive".into());
        }
        if self.head_depth == 0 || self.head_hidden == 0 {
            return fail("head depth and width must be at least 1".into());
        }
        if !(self.var_floor > 0.0 && self.var_floor.is_finite()) {
            return fail(format!("var_floor must be positive, got {}", self.var_floor));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return fail(format!("val_fraction must be in (0, 1), got {}", self.val_fraction));
        }
        self.loss.validate()
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex(&self.hash_bytes())
    }

    pub fn hash_bytes(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).into()
    }

    /// Student layer widths from input to embedding.
    pub fn student_dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        dims.extend(&self.student_hidden);
        dims.push(self.student_dim);
        dims
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_tracks_every_field() {
        let a = TrainConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.lr = 2e-3;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn rejects_invalid() {
        assert!(TrainConfig::default().validate().is_ok());
        for f in [
            |c: &mut TrainConfig| c.epochs = 0,
            |c: &mut TrainConfig| c.student_dim = 0,
            |c: &mut TrainConfig| c.head_depth = 0,
            |c: &mut TrainConfig| c.lr = f64::NAN,
            |c: &mut TrainConfig| c.val_fraction = 0.0,
            |c: &mut TrainConfig| c.loss = LossKind::Cosine { eps: 0.0 },
        ] {
            let mut c = TrainConfig::default();
            f(&mut c);
            assert!(c.validate().is_err());
        }
    }
}
