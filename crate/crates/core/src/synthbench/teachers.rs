use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::world::{RandomView, SynthWorld};
use crate::datastore::{EmbeddingDataset, TeacherView};
use crate::error::{Error, Result};
use crate::numkit::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViewKind {
    /// The latent subset itself; requires `dim == subset.len()`.
    Identity,
    /// Frozen random tanh network of the latent subset.
    RandomMlp { hidden: usize, gain: f64 },
}

/// A synthetic teacher: a frozen view of a subset of the latent coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherSpec {
    pub name: String,
    pub subset: Vec<usize>,
    pub dim: usize,
    pub view: ViewKind,
    pub noise: f64,
    pub seed: u64,
}

impl TeacherSpec {
    fn validate(&self, latent_dim: usize) -> Result<()> {
        if self.subset.is_empty() {
            return Err(Error::Usage(format!("teacher '{}' has an empty latent subset", self.name)));
        }
        if let Some(&c) = self.subset.iter().find(|&&c| c >= latent_dim) {
            return Err(Error::Usage(format!(
                "teacher '{}': latent coordinate {c} out of range (L = {latent_dim})",
                self.name
            )));
        }
        if self.dim == 0 || !(self.noise >= 0.0) {
            return Err(Error::Usage(format!("teacher '{}': dim must be >= 1 and noise >= 0", self.name)));
        }
        match self.view {
            ViewKind::Identity if self.dim != self.subset.len() => Err(Error::Usage(format!(
                "teacher '{}': identity view needs dim {} to equal subset size {}",
                self.name,
                self.dim,
                self.subset.len()
            ))),
            ViewKind::RandomMlp { hidden: 0, .. } => {
                Err(Error::Usage(format!("teacher '{}': view hidden width must be >= 1", self.name)))
            }
            _ => Ok(()),
        }
    }

    /// Teacher embeddings of `latent`; deterministic in the spec.
    pub fn embed(&self, latent: &Matrix) -> Result<Matrix> {
        self.validate(latent.cols())?;
        let mut r = rng::stream(self.seed, rng::STREAM_TEACHER);
        let z = latent.select_cols(&self.subset);
        let mut out = match self.view {
            ViewKind::Identity => z,
            ViewKind::RandomMlp { hidden, gain } => {
                RandomView::sample(self.subset.len(), hidden, self.dim, gain, &mut r).apply(&z)?
            }
        };
        if self.noise > 0.0 {
            for v in out.as_mut_slice() {
                let e: f64 = StandardNormal.sample(&mut r);
                *v += self.noise * e;
            }
        }
        Ok(out)
    }
}

/// Distillation dataset: the world's base features with one view per spec.
pub fn generate_teachers(world: &SynthWorld, specs: &[TeacherSpec]) -> Result<EmbeddingDataset> {
    let teachers = specs
        .iter()
        .map(|s| {
            Ok(TeacherView {
                name: s.name.clone(),
                embeddings: s.embed(&world.latent)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EmbeddingDataset::new(world.base_features.clone(), teachers, None)
}
