//! Multi-teacher embedding distillation through per-teacher Gaussian kernels.
//!
//! A student network is trained so that, for every teacher, a small head can
//! predict the teacher's embedding as a diagonal Gaussian conditioned on the
//! student's embedding. The averaged negative log-likelihood estimates the
//! conditional entropy of the teachers given the student, and
//! `1 - exp(-h)` bounds how often Bayes-rule decisions built on the two
//! representations disagree.

pub mod error;
pub mod numkit;
pub mod rng;

pub use error::{Error, Result};
pub mod datastore;
pub mod kernels;
pub mod trainer;
pub mod probe;
pub mod synthbench;
