use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, auroc, r_squared};
use crate::datastore::{batch_indices, Labels, SplitSpec, DEFAULT_RATIOS};
use crate::error::{Error, Result};
use crate::numkit::{AdamConfig, AdamState, Matrix, MlpParams};
use crate::rng;

/// Probe architecture and schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub hidden: usize,
    /// Number of weight layers.
    pub depth: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Epochs are `clamp(epoch_budget / train_size, min_epochs, max_epochs)`.
    pub max_epochs: usize,
    pub epoch_budget: usize,
    pub min_epochs: usize,
    /// Split seeds; one probe run per seed.
    pub seeds: Vec<u64>,
    /// Train/validation/test ratios.
    pub split: [f64; 3],
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            depth: 2,
            lr: 1e-3,
            batch_size: 64,
            max_epochs: 100,
            epoch_budget: 200 * 5000,
            min_epochs: 10,
            seeds: (0..5).collect(),
            split: DEFAULT_RATIOS,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.depth == 0 || self.batch_size == 0 {
            return Err(Error::Usage("probe widths, depth and batch size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Usage(format!("probe lr must be positive, got {}", self.lr)));
        }
        if self.min_epochs == 0 || self.min_epochs > self.max_epochs {
            return Err(Error::Usage(format!(
                "probe epochs need 1 <= min ({}) <= max ({})",
                self.min_epochs, self.max_epochs
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Usage("at least one probe seed is required".into()));
        }
        Ok(())
    }

    /// Epoch count for a task whose training split has `train_size` rows.
    pub fn epochs_for(&self, train_size: usize) -> usize {
        (self.epoch_budget / train_size.max(1)).clamp(self.min_epochs, self.max_epochs)
    }

    fn layer_dims(&self, input: usize, output: usize) -> Vec<usize> {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(self.hidden, self.depth - 1));
        dims.push(output);
        dims
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    Binary,
    Multiclass(usize),
    Regression,
}

impl TaskKind {
    pub fn of(labels: &Labels) -> Result<Self> {
        match labels {
            Labels::Regression(_) => Ok(TaskKind::Regression),
            Labels::Classes(_) => match labels.num_classes().unwrap_or(0) {
                0 | 1 => Err(Error::Degenerate("classification task with a single class".into())),
                2 => Ok(TaskKind::Binary),
                c => Ok(TaskKind::Multiclass(c)),
            },
        }
    }

    /// Metrics reported for this kind; the first one selects the checkpoint
    /// for the parameters returned.
    pub fn metrics(self) -> &'static [&'static str] {
        match self {
            TaskKind::Binary => &["auroc", "accuracy"],
            TaskKind::Multiclass(_) => &["accuracy"],
            TaskKind::Regression => &["r2"],
        }
    }

    fn outputs(self) -> usize {
        match self {
            TaskKind::Binary => 2,
            TaskKind::Multiclass(c) => c,
            TaskKind::Regression => 1,
        }
    }
}

/// Trained probe with its input (and, for regression, target) standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub kind: TaskKind,
    pub mlp: MlpParams,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    /// `(mean, std)` of training targets for regression.
    pub target_scale: Option<(f64, f64)>,
}

impl ProbeModel {
    fn standardize(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.feature_mean).zip(&self.feature_scale) {
                *v = (*v - m) / s;
            }
        }
        out
    }

    /// Raw outputs: logits for classification, targets for regression.
    pub fn outputs(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = self.mlp.predict(&self.standardize(x))?;
        if let Some((m, s)) = self.target_scale {
            out = out.map(|v| v * s + m);
        }
        Ok(out)
    }

    /// Argmax class per row.
    pub fn predict_classes(&self, x: &Matrix) -> Result<Vec<u32>> {
        if self.kind == TaskKind::Regression {
            return Err(Error::Usage("class predictions from a regression probe".into()));
        }
        let logits = self.outputs(x)?;
        Ok((0..logits.rows())
            .map(|r| {
                let row = logits.row(r);
                let mut best = 0;
                for (c, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = c;
                    }
                }
                best as u32
            })
            .collect())
    }

    /// Metric name to value on the given rows.
    pub fn evaluate(&self, x: &Matrix, labels: &Labels) -> Result<BTreeMap<String, f64>> {
        let out = self.outputs(x)?;
        let mut m = BTreeMap::new();
        match (self.kind, labels) {
            (TaskKind::Regression, Labels::Regression(y)) => {
                m.insert("r2".into(), r_squared(out.as_slice(), y)?);
            }
            (TaskKind::Binary, Labels::Classes(y)) => {
                let pos: Vec<bool> = y.iter().map(|&c| c == 1).collect();
                // softmax positive-class probability is monotone in the logit gap
                let scores: Vec<f64> = (0..out.rows()).map(|r| sigmoid_gap(out.row(r))).collect();
                m.insert("auroc".into(), auroc(&scores, &pos)?);
                m.insert("accuracy".into(), accuracy(&self.predict_classes(x)?, y)?);
            }
            (TaskKind::Multiclass(_), Labels::Classes(y)) => {
                m.insert("accuracy".into(), accuracy(&self.predict_classes(x)?, y)?);
            }
            _ => return Err(Error::Usage("label type does not match the probe".into())),
        }
        Ok(m)
    }
}

fn sigmoid_gap(row: &[f64]) -> f64 {
    crate::kernels::sigmoid(row[1] - row[0])
}

/// Output of [`train_probe`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeFit {
    /// Test value of each metric at the epoch with the best validation value
    /// of that same metric; ties go to the later epoch.
    pub test: BTreeMap<String, f64>,
    pub validation: BTreeMap<String, f64>,
    /// 1-based epoch selected by the first metric of the task kind.
    pub best_epoch: usize,
    pub epochs: usize,
    /// Probe at `best_epoch`.
    pub model: ProbeModel,
}

fn column_stats(x: &Matrix, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; x.cols()];
    for &r in rows {
        for (m, v) in mean.iter_mut().zip(x.row(r)) {
            *m += v / n;
        }
    }
    let mut scale = vec![0.0; x.cols()];
    for &r in rows {
        for ((s, v), m) in scale.iter_mut().zip(x.row(r)).zip(&mean) {
            *s += (v - m).powi(2) / n;
        }
    }
    for s in &mut scale {
        *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
    }
    (mean, scale)
}

/// Training needs two classes; binary AUROC also needs both in validation and test.
fn check_classes(labels: &Labels, rows: &[usize], kind: TaskKind, split: &str) -> Result<()> {
    if let Labels::Classes(y) = labels {
        let needs_both = split == "train" || kind == TaskKind::Binary;
        if needs_both && rows.iter().all(|&r| y[r] == y[rows[0]]) {
            return Err(Error::Degenerate(format!("{split} split has a single class")));
        }
    }
    Ok(())
}

/// Train a feed-forward probe on frozen embeddings and report test metrics of
/// the best-validation epoch.
pub fn train_probe(embeddings: &Matrix, labels: &Labels, splits: &SplitSpec, cfg: &ProbeConfig) -> Result<ProbeFit> {
    cfg.validate()?;
    embeddings.check_finite("probe embeddings")?;
    if labels.len() != embeddings.rows() {
        return Err(Error::shape("probe labels", embeddings.rows(), labels.len()));
    }
    if splits.len() != embeddings.rows() {
        return Err(Error::shape("probe splits", embeddings.rows(), splits.len()));
    }
    let kind = TaskKind::of(labels)?;
    for (rows, name) in [(&splits.train, "train"), (&splits.val, "validation"), (&splits.test, "test")] {
        check_classes(labels, rows, kind, name)?;
    }

    let (feature_mean, feature_scale) = column_stats(embeddings, &splits.train);
    let target_scale = match labels {
        Labels::Regression(y) => {
            let t: Vec<f64> = splits.train.iter().map(|&r| y[r]).collect();
            let (m, s) = super::metrics::mean_std(&t);
            Some((m, if s > 0.0 { s } else { 1.0 }))
        }
        Labels::Classes(_) => None,
    };
    let mut rng = rng::stream(rng::derive_seed(splits.seed, 1), rng::STREAM_INIT);
    let mlp = MlpParams::init(&cfg.layer_dims(embeddings.cols(), kind.outputs()), &mut rng)?;
    let mut model = ProbeModel {
        kind,
        mlp,
        feature_mean,
        feature_scale,
        target_scale,
    };
    let x = model.standardize(embeddings);
    let mut opt = AdamState::new(&model.mlp, AdamConfig::with_lr(cfg.lr));

    let val_x = embeddings.select_rows(&splits.val);
    let test_x = embeddings.select_rows(&splits.test);
    let val_y = labels.select(&splits.val);
    let test_y = labels.select(&splits.test);

    let epochs = cfg.epochs_for(splits.train.len());
    let metric_names = kind.metrics();
    let mut best_val: BTreeMap<String, f64> = BTreeMap::new();
    let mut best_test: BTreeMap<String, f64> = BTreeMap::new();
    let mut best = (0, model.clone());
    for epoch in 0..epochs {
        for batch in batch_indices(&splits.train, cfg.batch_size, epoch, splits.seed)? {
            let xb = x.select_rows(&batch);
            let (out, tape) = model.mlp.forward(&xb)?;
            let grad = output_gradient(&out, labels, &batch, model.target_scale)?;
            let (g, _) = model.mlp.backward(&tape, &grad)?;
            opt.step(&mut model.mlp, &g)?;
        }
        let val = model.evaluate(&val_x, &val_y)?;
        let test = model.evaluate(&test_x, &test_y)?;
        for name in metric_names {
            let v = val[*name];
            if best_val.get(*name).is_none_or(|&b| v >= b) {
                best_val.insert(name.to_string(), v);
                best_test.insert(name.to_string(), test[*name]);
                if *name == metric_names[0] {
                    best = (epoch + 1, model.clone());
                }
            }
        }
    }
    Ok(ProbeFit {
        test: best_test,
        validation: best_val,
        best_epoch: best.0,
        epochs,
        model: best.1,
    })
}

/// Gradient of the mean batch loss with respect to the probe outputs:
/// softmax cross-entropy for classes, half squared error on standardized
/// targets for regression.
fn output_gradient(out: &Matrix, labels: &Labels, batch: &[usize], target_scale: Option<(f64, f64)>) -> Result<Matrix> {
    let b = batch.len() as f64;
    let mut g = out.clone();
    match labels {
        Labels::Classes(y) => {
            for (r, &i) in batch.iter().enumerate() {
                let row = g.row_mut(r);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    z += *v;
                }
                for v in row.iter_mut() {
                    *v /= z * b;
                }
                row[y[i] as usize] -= 1.0 / b;
            }
        }
        Labels::Regression(y) => {
            let (m, s) = target_scale.unwrap_or((0.0, 1.0));
            for (r, &i) in batch.iter().enumerate() {
                let v = g.get(r, 0);
                g.set(r, 0, (v - (y[i] - m) / s) / b);
            }
        }
    }
    if !g.is_finite() {
        return Err(Error::NonFinite("probe gradient".into()));
    }
    Ok(g)
}
