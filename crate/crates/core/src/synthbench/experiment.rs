use serde::{Deserialize, Serialize};

use super::fixture::FixtureSpec;
use super::teachers::generate_teachers;
use super::world::{generate_world, SynthWorld};
use crate::datastore::{EmbeddingDataset, Labels, SplitSpec};
use crate::error::{Error, Result};
use crate::kernels::{DisagreementBound, LossKind};
use crate::probe::{aggregate_runs, evaluate_embedder, train_probe, MetricsReport, ProbeConfig};
use crate::numkit::Matrix;
use crate::trainer::{eval_loss, initial_checkpoint, train_distill, validation_rows, Checkpoint, TrainConfig};

/// One student to train: objective, teacher subset and head depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCell {
    pub loss: LossKind,
    pub teachers: Vec<usize>,
    /// Only used by the NLL objective.
    pub head_depth: usize,
}

impl ExperimentCell {
    pub fn new(loss: LossKind, teachers: Vec<usize>, head_depth: usize) -> Self {
        Self {
            loss,
            teachers,
            head_depth,
        }
    }

    /// Embedder name used in reports, e.g. `nll-t0.1.2.3-h3` or `mse-t0.1.2.3`.
    pub fn name(&self) -> String {
        let subset: Vec<String> = self.teachers.iter().map(usize::to_string).collect();
        match self.loss {
            LossKind::Nll => format!("nll-t{}-h{}", subset.join("."), self.head_depth),
            other => format!("{}-t{}", other.name(), subset.join(".")),
        }
    }
}

/// Training summary of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub name: String,
    pub cell: ExperimentCell,
    pub train_seed: u64,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
    /// Validation terms per teacher before any update and after training.
    pub initial_val_terms: Vec<f64>,
    pub final_val_terms: Vec<f64>,
    pub bound: Option<DisagreementBound>,
}

/// Trained cells plus probe metrics of every student on every task.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub cells: Vec<CellOutcome>,
    pub metrics: MetricsReport,
    #[serde(skip)]
    pub checkpoints: Vec<Checkpoint>,
}

impl ComparisonReport {
    pub fn outcome(&self, name: &str) -> Option<&CellOutcome> {
        self.cells.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Train every cell on its teacher subset (seed `config.seed ⊕ index`), embed
/// all rows with the frozen student and probe every task under every probe
/// seed. Task labels are never seen during distillation.
pub fn run_comparison(
    world: &SynthWorld,
    data: &EmbeddingDataset,
    cells: &[ExperimentCell],
    config: &TrainConfig,
    probe: &ProbeConfig,
    progress: &mut dyn FnMut(&str),
) -> Result<ComparisonReport> {
    probe.validate()?;
    if cells.is_empty() {
        return Err(Error::Usage("no experiment cells".into()));
    }
    let mut names: Vec<String> = cells.iter().map(ExperimentCell::name).collect();
    names.sort();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Usage(format!("duplicate experiment cell '{}'", w[0])));
    }
    let tasks = world.task_labels();
    let mut outcomes = Vec::new();
    let mut checkpoints = Vec::new();
    let mut runs = Vec::new();
    for (index, cell) in cells.iter().enumerate() {
        if cell.teachers.is_empty() {
            return Err(Error::Usage(format!("cell {index} has no teachers")));
        }
        let name = cell.name();
        let subset = data.with_teachers(&cell.teachers)?;
        let cfg = TrainConfig {
            seed: config.seed ^ index as u64,
            loss: cell.loss,
            head_depth: cell.head_depth,
            ..config.clone()
        };
        let val = validation_rows(&cfg, subset.n())?;
        let initial = eval_loss(&initial_checkpoint(&cfg, &subset)?, &subset, &val)?;
        let ckpt = train_distill(&cfg, &subset)?;
        let last = ckpt.history.last().expect("at least one epoch");
        let evaluated = eval_loss(&ckpt, &subset, &val)?;
        outcomes.push(CellOutcome {
            name: name.clone(),
            cell: cell.clone(),
            train_seed: cfg.seed,
            final_train_loss: last.train_loss,
            final_val_loss: last.val_loss,
            initial_val_terms: initial.per_teacher.per_teacher,
            final_val_terms: evaluated.per_teacher.per_teacher,
            bound: evaluated.bound,
        });
        progress(&format!("trained {name}: val loss {:.4} -> {:.4}", initial.loss, last.val_loss));
        let embeddings = ckpt.model.embed(&data.base)?;
        runs.extend(evaluate_embedder(&name, &embeddings, &tasks, probe)?);
        progress(&format!("probed {name}"));
        checkpoints.push(ckpt);
    }
    Ok(ComparisonReport {
        cells: outcomes,
        metrics: aggregate_runs(&runs)?,
        checkpoints,
    })
}

/// Generate the fixture's world and teachers and run its cells.
pub fn run_fixture(spec: &FixtureSpec, progress: &mut dyn FnMut(&str)) -> Result<(SynthWorld, ComparisonReport)> {
    let world = generate_world(&spec.world)?;
    let data = generate_teachers(&world, &spec.teachers)?;
    let report = run_comparison(&world, &data, &spec.cells, &spec.train, &spec.probe, progress)?;
    Ok((world, report))
}

/// Probe-based surrogate of the student/teacher disagreement on a discrete task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementReport {
    /// Fraction of test rows where the student's and teacher k's probes disagree.
    pub rates: Vec<f64>,
    pub mean_rate: f64,
    pub student_accuracy: f64,
    pub teacher_accuracy: Vec<f64>,
    /// Bound values from the checkpoint, reported alongside and never compared.
    pub bound: Option<DisagreementBound>,
}

/// Train one probe on the student embeddings and one per teacher, then count
/// test rows where the argmax predictions differ.
pub fn empirical_disagreement(
    student: &Matrix,
    teachers: &[Matrix],
    labels: &Labels,
    splits: &SplitSpec,
    probe: &ProbeConfig,
    bound: Option<DisagreementBound>,
) -> Result<DisagreementReport> {
    let Labels::Classes(y) = labels else {
        return Err(Error::Usage("disagreement needs a discrete task".into()));
    };
    if teachers.is_empty() {
        return Err(Error::Usage("disagreement needs at least one teacher".into()));
    }
    let test_x = |m: &Matrix| m.select_rows(&splits.test);
    let truth: Vec<u32> = splits.test.iter().map(|&i| y[i]).collect();
    let fit = train_probe(student, labels, splits, probe)?;
    let s_pred = fit.model.predict_classes(&test_x(student))?;
    let mut rates = Vec::with_capacity(teachers.len());
    let mut teacher_accuracy = Vec::with_capacity(teachers.len());
    for t in teachers {
        let fit = train_probe(t, labels, splits, probe)?;
        let t_pred = fit.model.predict_classes(&test_x(t))?;
        let differ = s_pred.iter().zip(&t_pred).filter(|(a, b)| a != b).count();
        rates.push(differ as f64 / s_pred.len() as f64);
        teacher_accuracy.push(crate::probe::accuracy(&t_pred, &truth)?);
    }
    Ok(DisagreementReport {
        mean_rate: rates.iter().sum::<f64>() / rates.len() as f64,
        rates,
        student_accuracy: crate::probe::accuracy(&s_pred, &truth)?,
        teacher_accuracy,
        bound,
    })
}
