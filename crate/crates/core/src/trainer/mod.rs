//! The distillation loop: student and per-teacher heads trained jointly with
//! Adam on precomputed teacher embeddings.

mod checkpoint;
mod config;
mod model;
mod plot;
mod timing;

pub use checkpoint::{checkpoint_roundtrip, Checkpoint, EpochRecord};
pub use config::TrainConfig;
pub use model::{DistillModel, Heads, StepGradients};
pub use plot::history_svg;
pub use timing::{linear_fit, timing_report, LinearFit, TimingReport, TimingRow, MIN_TIMING_STEPS};

use serde::{Deserialize, Serialize};

use crate::datastore::{batch_indices, holdout_split, EmbeddingDataset};
use crate::error::{Error, Result};
use crate::kernels::{disagreement_bound, DisagreementBound, EntropyEstimate, LossKind};
use crate::numkit::{AdamConfig, AdamState, Matrix};
use crate::rng;

/// Held-out loss of a checkpoint on a set of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub loss: f64,
    /// Per-teacher terms; conditional entropy estimates for the NLL objective.
    pub per_teacher: EntropyEstimate,
    /// Only defined for the NLL objective.
    pub bound: Option<DisagreementBound>,
}

fn check_data(config: &TrainConfig, data: &EmbeddingDataset) -> Result<()> {
    config.validate()?;
    if data.num_teachers() == 0 {
        return Err(Error::Usage("distillation needs at least one teacher".into()));
    }
    if data.teacher_dims().contains(&0) || data.input_dim() == 0 {
        return Err(Error::Usage("embedding widths must be positive".into()));
    }
    let (train, _) = holdout_split(data.n(), config.val_fraction, config.seed)?;
    if train.is_empty() {
        return Err(Error::Usage("no training rows".into()));
    }
    Ok(())
}

/// Freshly initialized state (epoch 0) for `config` on `data`.
pub fn initial_checkpoint(config: &TrainConfig, data: &EmbeddingDataset) -> Result<Checkpoint> {
    check_data(config, data)?;
    let mut r = rng::stream(config.seed, rng::STREAM_INIT);
    let model = DistillModel::init(config, data.input_dim(), &data.teacher_dims(), &mut r)?;
    let adam = AdamConfig::with_lr(config.lr);
    let student_opt = AdamState::new(&model.student, adam);
    let head_opts = model.heads.params().into_iter().map(|h| AdamState::new(h, adam)).collect();
    Ok(Checkpoint {
        config: config.clone(),
        config_hash: config.hash(),
        epoch: 0,
        teacher_names: data.teachers.iter().map(|t| t.name.clone()).collect(),
        model,
        student_opt,
        head_opts,
        history: Vec::new(),
    })
}

/// Train from scratch for `config.epochs` epochs.
pub fn train_distill(config: &TrainConfig, data: &EmbeddingDataset) -> Result<Checkpoint> {
    train_distill_with(config, data, &mut |_| Ok(()))
}

/// As [`train_distill`], calling `on_checkpoint` every `config.checkpoint_every` epochs.
pub fn train_distill_with(
    config: &TrainConfig,
    data: &EmbeddingDataset,
    on_checkpoint: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<Checkpoint> {
    let ckpt = initial_checkpoint(config, data)?;
    run_epochs(ckpt, data, on_checkpoint)
}

/// Continue a checkpoint up to `total_epochs`. The result is identical to an
/// uninterrupted run configured with `total_epochs`.
pub fn resume_distill(
    mut checkpoint: Checkpoint,
    data: &EmbeddingDataset,
    total_epochs: usize,
    on_checkpoint: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<Checkpoint> {
    if total_epochs < checkpoint.epoch {
        return Err(Error::Usage(format!(
            "checkpoint already has {} epochs, asked for {total_epochs}",
            checkpoint.epoch
        )));
    }
    let names: Vec<&str> = data.teachers.iter().map(|t| t.name.as_str()).collect();
    if names != checkpoint.teacher_names.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::Usage(format!(
            "checkpoint was trained on teachers {:?}, data has {names:?}",
            checkpoint.teacher_names
        )));
    }
    checkpoint.config.epochs = total_epochs;
    checkpoint.config_hash = checkpoint.config.hash();
    check_data(&checkpoint.config, data)?;
    run_epochs(checkpoint, data, on_checkpoint)
}

fn diverged(epoch: usize, last: Checkpoint) -> Error {
    Error::Diverged {
        epoch,
        last_finite: Box::new(last),
    }
}

fn run_epochs(
    mut ckpt: Checkpoint,
    data: &EmbeddingDataset,
    on_checkpoint: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<Checkpoint> {
    let config = ckpt.config.clone();
    let (train_idx, val_idx) = holdout_split(data.n(), config.val_fraction, config.seed)?;
    let (val_x, val_t) = data.batch(&val_idx);
    let n_train = train_idx.len() as f64;

    while ckpt.epoch < config.epochs {
        let epoch = ckpt.epoch;
        let snapshot = ckpt.clone();
        let mut weighted = 0.0;
        for batch in batch_indices(&train_idx, config.batch_size, epoch, config.seed)? {
            let (x, teachers) = data.batch(&batch);
            let grads = match ckpt.model.gradients(config.loss, &x, &teachers) {
                Ok(g) if g.loss.is_finite() => g,
                Ok(_) => return Err(diverged(epoch + 1, snapshot)),
                Err(e) if e.is_numeric() => return Err(diverged(epoch + 1, snapshot)),
                Err(e) => return Err(e),
            };
            let stepped = ckpt
                .student_opt
                .step(&mut ckpt.model.student, &grads.student)
                .and_then(|_| {
                    for ((head, grad), opt) in ckpt
                        .model
                        .heads
                        .params_mut()
                        .into_iter()
                        .zip(grads.heads.params())
                        .zip(ckpt.head_opts.iter_mut())
                    {
                        opt.step(head, grad)?;
                    }
                    Ok(())
                });
            match stepped {
                Ok(()) => {}
                Err(e) if e.is_numeric() => return Err(diverged(epoch + 1, snapshot)),
                Err(e) => return Err(e),
            }
            weighted += grads.loss * batch.len() as f64;
        }
        let (val_loss, per_teacher) = match ckpt.model.evaluate(config.loss, &val_x, &val_t) {
            Ok(v) if v.0.is_finite() => v,
            Ok(_) => return Err(diverged(epoch + 1, snapshot)),
            Err(e) if e.is_numeric() => return Err(diverged(epoch + 1, snapshot)),
            Err(e) => return Err(e),
        };
        let train_loss = weighted / n_train;
        if !train_loss.is_finite() {
            return Err(diverged(epoch + 1, snapshot));
        }
        ckpt.push_record(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            val_loss,
            per_teacher: per_teacher.per_teacher,
        });
        if config.checkpoint_every > 0 && ckpt.epoch.is_multiple_of(config.checkpoint_every) {
            on_checkpoint(&ckpt)?;
        }
    }
    Ok(ckpt)
}

/// Rows held out for validation by a run with `config` on `n` samples.
pub fn validation_rows(config: &TrainConfig, n: usize) -> Result<Vec<usize>> {
    Ok(holdout_split(n, config.val_fraction, config.seed)?.1)
}

/// Rows used for gradient steps by a run with `config` on `n` samples.
pub fn training_rows(config: &TrainConfig, n: usize) -> Result<Vec<usize>> {
    Ok(holdout_split(n, config.val_fraction, config.seed)?.0)
}

/// Evaluate the loss on `rows` without touching any parameter.
pub fn eval_loss(checkpoint: &Checkpoint, data: &EmbeddingDataset, rows: &[usize]) -> Result<EvalReport> {
    if let Some(&bad) = rows.iter().find(|&&i| i >= data.n()) {
        return Err(Error::Usage(format!("row {bad} out of range ({})", data.n())));
    }
    if rows.is_empty() {
        return Err(Error::Usage("cannot evaluate on an empty split".into()));
    }
    let (x, teachers) = data.batch(rows);
    let (loss, per_teacher) = checkpoint.model.evaluate(checkpoint.config.loss, &x, &teachers)?;
    let bound = matches!(checkpoint.config.loss, LossKind::Nll).then(|| disagreement_bound(&per_teacher));
    Ok(EvalReport {
        loss,
        per_teacher,
        bound,
    })
}

/// Student embeddings of every row of `base`.
pub fn export_embeddings(checkpoint: &Checkpoint, base: &Matrix) -> Result<Matrix> {
    checkpoint.model.embed(base)
}
