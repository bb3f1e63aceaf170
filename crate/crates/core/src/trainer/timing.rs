use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{initial_checkpoint, TrainConfig};
use crate::datastore::{batch_indices, EmbeddingDataset};
use crate::error::{Error, Result};

pub const MIN_TIMING_STEPS: usize = 100;
const WARMUP_STEPS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub teachers: usize,
    pub steps: usize,
    pub mean_step_secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual_rms: f64,
}

/// Step time as a function of the number of teachers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
    /// Seconds per step added by each extra teacher.
    pub fit: LinearFit,
    /// `slope / intercept`: marginal cost of one teacher relative to the fixed cost.
    pub per_teacher_overhead_fraction: f64,
}

impl TimingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("teachers,steps,mean_step_ms,fitted_ms\n");
        for r in &self.rows {
            let fitted = self.fit.intercept + self.fit.slope * r.teachers as f64;
            out.push_str(&format!(
                "{},{},{:.6},{:.6}\n",
                r.teachers,
                r.steps,
                r.mean_step_secs * 1e3,
                fitted * 1e3
            ));
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "slope {:.4} ms/teacher, intercept {:.4} ms, residual rms {:.4} ms, per-teacher overhead fraction {:.4}",
            self.fit.slope * 1e3,
            self.fit.intercept * 1e3,
            self.fit.residual_rms * 1e3,
            self.per_teacher_overhead_fraction
        )
    }
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    let n = xs.len() as f64;
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Usage("a linear fit needs at least two points".into()));
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Usage("a linear fit needs at least two distinct x values".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    Ok(LinearFit {
        slope,
        intercept,
        residual_rms: (rss / n).sqrt(),
    })
}

/// Time full training steps (forward, backward, Adam) for the first `K`
/// teachers of `data`, for each `K` in `teacher_counts`.
pub fn timing_report(
    config: &TrainConfig,
    data: &EmbeddingDataset,
    teacher_counts: &[usize],
    steps: usize,
) -> Result<TimingReport> {
    if steps < MIN_TIMING_STEPS {
        return Err(Error::Usage(format!("timing needs at least {MIN_TIMING_STEPS} steps, got {steps}")));
    }
    let mut rows = Vec::with_capacity(teacher_counts.len());
    for &k in teacher_counts {
        if k == 0 || k > data.num_teachers() {
            return Err(Error::Usage(format!(
                "teacher count {k} not in 1..={}",
                data.num_teachers()
            )));
        }
        let subset = data.with_teachers(&(0..k).collect::<Vec<_>>())?;
        let mut ckpt = initial_checkpoint(config, &subset)?;
        let all: Vec<usize> = (0..subset.n()).collect();
        let mut batches = Vec::new();
        let mut epoch = 0;
        while batches.len() < steps + WARMUP_STEPS {
            batches.extend(batch_indices(&all, config.batch_size, epoch, config.seed)?);
            epoch += 1;
        }
        let mut elapsed = 0.0;
        for (i, batch) in batches.iter().take(steps + WARMUP_STEPS).enumerate() {
            let (x, teachers) = subset.batch(batch);
            let start = Instant::now();
            let grads = ckpt.model.gradients(config.loss, &x, &teachers)?;
            ckpt.student_opt.step(&mut ckpt.model.student, &grads.student)?;
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
            if i >= WARMUP_STEPS {
                elapsed += start.elapsed().as_secs_f64();
            }
        }
        rows.push(TimingRow {
            teachers: k,
            steps,
            mean_step_secs: elapsed / steps as f64,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.teachers as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_step_secs).collect();
    let fit = linear_fit(&xs, &ys)?;
    Ok(TimingReport {
        rows,
        per_teacher_overhead_fraction: fit.slope / fit.intercept,
        fit,
    })
}
