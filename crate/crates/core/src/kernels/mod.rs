//! Per-teacher Gaussian kernels, the averaged NLL objective, the MSE and
//! cosine baselines, and the entropy-based disagreement bound.

mod baseline;
mod bound;
mod head;
mod nll;
mod reduce;

pub use baseline::{adapted_loss, cosine_loss, mse_loss, Adapter, BaselineOutput, LossKind};
pub use bound::{bound_from_entropy, disagreement_bound, DisagreementBound};
pub use head::{head_forward, sigmoid, softplus, softplus_inverse, GaussianHead, HeadOutput};
pub use nll::{gaussian_nll, gaussian_nll_value, EntropyEstimate, NllOutput};
pub use reduce::{order_invariant_mean, order_invariant_sum};
