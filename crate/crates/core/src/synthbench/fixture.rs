use serde::{Deserialize, Serialize};

use super::experiment::ExperimentCell;
use super::teachers::{TeacherSpec, ViewKind};
use super::world::WorldSpec;
use crate::error::{Error, Result};
use crate::kernels::LossKind;
use crate::probe::ProbeConfig;
use crate::rng;
use crate::trainer::TrainConfig;

/// Everything needed to regenerate an experiment from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub preset: String,
    pub world: WorldSpec,
    pub teachers: Vec<TeacherSpec>,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
    pub cells: Vec<ExperimentCell>,
}

impl FixtureSpec {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fixture serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Usage(format!("fixture JSON: {e}")))
    }
}

pub const PRESETS: [&str; 2] = ["standard", "small"];

fn teachers_for(world: &WorldSpec, dim: usize, noise: f64) -> Vec<TeacherSpec> {
    (0..world.groups)
        .map(|g| TeacherSpec {
            name: format!("teacher{g}"),
            subset: world.group(g),
            dim,
            view: ViewKind::RandomMlp { hidden: 32, gain: 1.5 },
            noise,
            seed: rng::derive_seed(world.seed, 100 + g as u64),
        })
        .collect()
}

/// Cells of the standard comparison: the all-teacher NLL student, one NLL
/// student per teacher, the MSE and cosine baselines on all teachers, and the
/// head-depth sweep.
pub fn standard_cells(teachers: usize, depths: &[usize], base_depth: usize) -> Vec<ExperimentCell> {
    let all: Vec<usize> = (0..teachers).collect();
    let mut cells = vec![ExperimentCell::new(LossKind::Nll, all.clone(), base_depth)];
    for k in 0..teachers {
        cells.push(ExperimentCell::new(LossKind::Nll, vec![k], base_depth));
    }
    cells.push(ExperimentCell::new(LossKind::Mse, all.clone(), base_depth));
    cells.push(ExperimentCell::new(
        LossKind::Cosine {
            eps: LossKind::DEFAULT_COSINE_EPS,
        },
        all.clone(),
        base_depth,
    ));
    for &d in depths.iter().filter(|&&d| d != base_depth) {
        cells.push(ExperimentCell::new(LossKind::Nll, all.clone(), d));
    }
    cells
}

/// Named preset. `standard`: n = 4000, L = 12, four teachers on disjoint
/// triples with d_k = 16, six single-group and two spanning binary tasks.
/// `small`: a scaled-down world for smoke tests.
pub fn preset(name: &str, seed: u64) -> Result<FixtureSpec> {
    let (world, train, probe) = match name {
        "standard" => {
            let world = WorldSpec::new(4000, 12, 32, 8, seed);
            let train = TrainConfig {
                seed,
                epochs: 30,
                batch_size: 128,
                lr: 1e-3,
                student_hidden: vec![128],
                student_dim: 32,
                head_depth: 3,
                head_hidden: 64,
                ..TrainConfig::default()
            };
            let probe = ProbeConfig {
                hidden: 128,
                max_epochs: 25,
                ..ProbeConfig::default()
            };
            (world, train, probe)
        }
        "small" => {
            let world = WorldSpec::new(600, 8, 16, 4, seed);
            let train = TrainConfig {
                seed,
                epochs: 5,
                batch_size: 64,
                student_hidden: vec![32],
                student_dim: 16,
                head_depth: 2,
                head_hidden: 16,
                ..TrainConfig::default()
            };
            let probe = ProbeConfig {
                hidden: 16,
                max_epochs: 10,
                seeds: vec![0, 1],
                ..ProbeConfig::default()
            };
            (world, train, probe)
        }
        other => {
            return Err(Error::Usage(format!(
                "unknown preset '{other}' (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    };
    let (dim, depths) = if name == "standard" { (16, vec![2, 3, 5]) } else { (6, vec![2]) };
    let teachers = teachers_for(&world, dim, 0.05);
    let cells = standard_cells(teachers.len(), &depths, train.head_depth);
    Ok(FixtureSpec {
        preset: name.to_string(),
        world,
        teachers,
        train,
        probe,
        cells,
    })
}
