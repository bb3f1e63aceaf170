use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datastore::Labels;
use crate::error::{Error, Result};
use crate::numkit::Matrix;
use crate::rng;

const MAX_THRESHOLD_ATTEMPTS: usize = 100;
const MIN_PREVALENCE: f64 = 0.1;

/// Frozen random two-layer tanh network `x ↦ tanh(x·W₁·gain + b₁)·W₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomView {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
}

impl RandomView {
    pub fn sample<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, gain: f64, rng: &mut R) -> Self {
        let mut normal = |rows: usize, cols: usize, scale: f64| {
            Matrix::from_fn(rows, cols, |_, _| { let z: f64 = StandardNormal.sample(&mut *rng); scale * z })
        };
        let w1 = normal(input, hidden, gain / (input as f64).sqrt());
        let b1 = normal(1, hidden, 0.1).into_vec();
        let w2 = normal(hidden, output, 1.0 / (hidden as f64).sqrt());
        Self { w1, b1, w2 }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = x.matmul(&self.w1)?;
        h.add_row_vector(&self.b1);
        h.map(f64::tanh).matmul(&self.w2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthTaskKind {
    Binary,
    Regression,
}

/// A downstream task defined by a linear functional of some latent coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskLabels {
    pub name: String,
    pub kind: SynthTaskKind,
    pub coords: Vec<usize>,
    pub weights: Vec<f64>,
    /// Decision threshold for binary tasks.
    pub threshold: f64,
    #[serde(skip)]
    pub labels: Option<Labels>,
}

impl TaskLabels {
    pub fn labels(&self) -> &Labels {
        self.labels.as_ref().expect("task labels are generated with the world")
    }

    /// Fraction of positive labels for binary tasks.
    pub fn prevalence(&self) -> Option<f64> {
        match self.labels() {
            Labels::Classes(y) => Some(y.iter().filter(|&&c| c == 1).count() as f64 / y.len() as f64),
            Labels::Regression(_) => None,
        }
    }
}

/// Parameters of a synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub n: usize,
    pub latent_dim: usize,
    pub input_dim: usize,
    /// Latent coordinates are split into this many contiguous groups.
    pub groups: usize,
    /// Binary tasks on a single group.
    pub single_group_tasks: usize,
    /// Binary tasks on two groups.
    pub spanning_tasks: usize,
    /// Regression tasks on a single group.
    pub regression_tasks: usize,
    pub base_hidden: usize,
    /// Pre-activation scale of the base-feature network.
    pub base_gain: f64,
    pub base_noise: f64,
    pub seed: u64,
}

impl WorldSpec {
    /// `n_tasks` binary tasks over four latent groups; two of them span a pair
    /// of groups once there are at least four tasks.
    pub fn new(n: usize, latent_dim: usize, input_dim: usize, n_tasks: usize, seed: u64) -> Self {
        let spanning = if n_tasks >= 4 { 2 } else { 0 };
        Self {
            n,
            latent_dim,
            input_dim,
            groups: 4.min(latent_dim).max(1),
            single_group_tasks: n_tasks - spanning,
            spanning_tasks: spanning,
            regression_tasks: 0,
            base_hidden: 64,
            base_gain: 1.0,
            base_noise: 0.05,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 100 || self.latent_dim < 4 {
            return Err(Error::Usage(format!(
                "world needs n >= 100 and latent dim >= 4, got n = {}, L = {}",
                self.n, self.latent_dim
            )));
        }
        if self.groups == 0 || self.groups > self.latent_dim {
            return Err(Error::Usage(format!("{} groups over {} latent coordinates", self.groups, self.latent_dim)));
        }
        if self.spanning_tasks > 0 && self.groups < 2 {
            return Err(Error::Usage("spanning tasks need at least two groups".into()));
        }
        if self.input_dim == 0 || self.base_hidden == 0 {
            return Err(Error::Usage("base feature widths must be positive".into()));
        }
        if !(self.base_noise >= 0.0 && self.base_gain > 0.0) {
            return Err(Error::Usage("base noise must be >= 0 and gain > 0".into()));
        }
        Ok(())
    }

    /// Latent coordinates of group `g`; the last group takes any remainder.
    pub fn group(&self, g: usize) -> Vec<usize> {
        let size = self.latent_dim / self.groups;
        let end = if g + 1 == self.groups { self.latent_dim } else { (g + 1) * size };
        (g * size..end).collect()
    }
}

/// Latent factors, observed base features and downstream tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthWorld {
    pub spec: WorldSpec,
    pub latent: Matrix,
    pub base_features: Matrix,
    pub tasks: Vec<TaskLabels>,
}

impl SynthWorld {
    pub fn seed(&self) -> u64 {
        self.spec.seed
    }

    /// `(name, labels)` pairs for probing.
    pub fn task_labels(&self) -> Vec<(String, Labels)> {
        self.tasks.iter().map(|t| (t.name.clone(), t.labels().clone())).collect()
    }
}

fn standard_normal(rows: usize, cols: usize, rng: &mut rng::Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn linear_functional(latent: &Matrix, coords: &[usize], weights: &[f64]) -> Vec<f64> {
    (0..latent.rows())
        .map(|r| coords.iter().zip(weights).map(|(&c, w)| latent.get(r, c) * w).sum())
        .collect()
}

fn binary_task(name: String, latent: &Matrix, coords: Vec<usize>, rng: &mut rng::Rng) -> Result<TaskLabels> {
    let weights: Vec<f64> = coords.iter().map(|_| StandardNormal.sample(&mut *rng)).collect();
    let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    let score = linear_functional(latent, &coords, &weights);
    for _ in 0..MAX_THRESHOLD_ATTEMPTS {
        let z: f64 = StandardNormal.sample(&mut *rng);
        let threshold = 0.5 * norm * z;
        let labels: Vec<u32> = score.iter().map(|&s| (s > threshold) as u32).collect();
        let p = labels.iter().filter(|&&c| c == 1).count() as f64 / labels.len() as f64;
        if (MIN_PREVALENCE..=1.0 - MIN_PREVALENCE).contains(&p) {
            return Ok(TaskLabels {
                name,
                kind: SynthTaskKind::Binary,
                coords,
                weights,
                threshold,
                labels: Some(Labels::Classes(labels)),
            });
        }
    }
    Err(Error::Degenerate(format!(
        "task '{name}': no threshold with prevalence in [{MIN_PREVALENCE}, {}] after {MAX_THRESHOLD_ATTEMPTS} attempts",
        1.0 - MIN_PREVALENCE
    )))
}

/// Seeded world: standard-normal latents, base features from a frozen random
/// network of the latents plus Gaussian noise, and tasks over latent groups.
pub fn generate_world(spec: &WorldSpec) -> Result<SynthWorld> {
    spec.validate()?;
    let mut r = rng::stream(spec.seed, rng::STREAM_WORLD);
    let latent = standard_normal(spec.n, spec.latent_dim, &mut r);
    let view = RandomView::sample(spec.latent_dim, spec.base_hidden, spec.input_dim, spec.base_gain, &mut r);
    let clean = view.apply(&latent)?;
    let noise = standard_normal(spec.n, spec.input_dim, &mut r);
    let mut base_features = clean;
    for (v, e) in base_features.as_mut_slice().iter_mut().zip(noise.as_slice()) {
        *v += spec.base_noise * e;
    }

    let mut tr = rng::stream(spec.seed, rng::STREAM_TASK);
    let mut tasks = Vec::new();
    for i in 0..spec.single_group_tasks {
        let g = i % spec.groups;
        tasks.push(binary_task(format!("bin{i}_g{g}"), &latent, spec.group(g), &mut tr)?);
    }
    for j in 0..spec.spanning_tasks {
        let (a, b) = ((2 * j) % spec.groups, (2 * j + 1) % spec.groups);
        let mut coords = spec.group(a);
        coords.extend(spec.group(b));
        tasks.push(binary_task(format!("span{j}_g{a}g{b}"), &latent, coords, &mut tr)?);
    }
    for j in 0..spec.regression_tasks {
        let g = j % spec.groups;
        let coords = spec.group(g);
        let weights: Vec<f64> = coords.iter().map(|_| StandardNormal.sample(&mut tr)).collect();
        let y = linear_functional(&latent, &coords, &weights);
        tasks.push(TaskLabels {
            name: format!("reg{j}_g{g}"),
            kind: SynthTaskKind::Regression,
            coords,
            weights,
            threshold: 0.0,
            labels: Some(Labels::Regression(y)),
        });
    }
    Ok(SynthWorld {
        spec: spec.clone(),
        latent,
        base_features,
        tasks,
    })
}
