//! Dense numeric core: matrices, MLPs with reverse-mode gradients, Adam and
//! finite-difference gradient checking. Everything is `f64` and single-threaded.

mod adam;
mod gradcheck;
mod matrix;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, GradCheckReport, NORM_FLOOR};
pub use matrix::{dot, Matrix};
pub use mlp::{Activation, Layer, MlpParams, Tape};

/// A set of trainable tensors, visited in a fixed order.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// All parameters concatenated in visiting order.
    fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    /// Overwrite parameters from a flat vector produced by [`Parameters::flatten`].
    fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "flat parameter length");
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
    }
}
