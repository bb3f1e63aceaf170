use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{descending_ranks, mean_std};
use crate::error::{Error, Result};

/// Metric preference for ranking: the first one a task reports is used.
pub const RANK_METRICS: [&str; 3] = ["auroc", "r2", "accuracy"];

/// One probe result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub embedder: String,
    pub task: String,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub embedder: String,
    pub task: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRanking {
    pub task: String,
    pub metric: String,
    /// `(embedder, rank)`; rank 1 is best.
    pub ranks: Vec<(String, f64)>,
}

/// Aggregated probe results over embedders, tasks and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Sorted by embedder, task, seed, metric.
    pub runs: Vec<RunResult>,
    pub cells: Vec<CellSummary>,
    pub task_ranks: Vec<TaskRanking>,
    pub average_rank: BTreeMap<String, f64>,
}

type Key = (String, String, u64, String);

/// Check grid completeness, then summarize each cell and rank embedders per
/// task. The result does not depend on the order of `results`.
pub fn aggregate_runs(results: &[RunResult]) -> Result<MetricsReport> {
    if results.is_empty() {
        return Err(Error::Usage("no probe results to aggregate".into()));
    }
    let mut by_key: BTreeMap<Key, f64> = BTreeMap::new();
    for r in results {
        if !r.value.is_finite() {
            return Err(Error::NonFinite(format!("{} / {} / seed {} / {}", r.embedder, r.task, r.seed, r.metric)));
        }
        let key = (r.embedder.clone(), r.task.clone(), r.seed, r.metric.clone());
        if by_key.insert(key, r.value).is_some() {
            return Err(Error::Usage(format!(
                "duplicate result for {} / {} / seed {} / {}",
                r.embedder, r.task, r.seed, r.metric
            )));
        }
    }
    let embedders: BTreeSet<&str> = results.iter().map(|r| r.embedder.as_str()).collect();
    let seeds: BTreeSet<u64> = results.iter().map(|r| r.seed).collect();
    let mut task_metrics: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in results {
        task_metrics.entry(&r.task).or_default().insert(&r.metric);
    }
    for e in &embedders {
        for (t, metrics) in &task_metrics {
            for s in &seeds {
                for m in metrics {
                    let key = (e.to_string(), t.to_string(), *s, m.to_string());
                    if !by_key.contains_key(&key) {
                        return Err(Error::Usage(format!("missing result for {e} / {t} / seed {s} / {m}")));
                    }
                }
            }
        }
    }

    let mut cells = Vec::new();
    for e in &embedders {
        for (t, metrics) in &task_metrics {
            for m in metrics {
                let values: Vec<f64> = seeds
                    .iter()
                    .map(|s| by_key[&(e.to_string(), t.to_string(), *s, m.to_string())])
                    .collect();
                let (mean, std) = mean_std(&values);
                cells.push(CellSummary {
                    embedder: e.to_string(),
                    task: t.to_string(),
                    metric: m.to_string(),
                    mean,
                    std,
                    runs: values.len(),
                });
            }
        }
    }

    let names: Vec<&str> = embedders.iter().copied().collect();
    let mut task_ranks = Vec::new();
    let mut rank_sums = vec![0.0; names.len()];
    for (t, metrics) in &task_metrics {
        let metric = RANK_METRICS
            .iter()
            .find(|m| metrics.contains(**m))
            .copied()
            .unwrap_or_else(|| metrics.iter().next().expect("task has a metric"));
        let means: Vec<f64> = names
            .iter()
            .map(|e| {
                cells
                    .iter()
                    .find(|c| c.embedder == *e && c.task == *t && c.metric == metric)
                    .expect("complete grid")
                    .mean
            })
            .collect();
        let ranks = descending_ranks(&means);
        for (sum, r) in rank_sums.iter_mut().zip(&ranks) {
            *sum += r;
        }
        task_ranks.push(TaskRanking {
            task: t.to_string(),
            metric: metric.to_string(),
            ranks: names.iter().map(|e| e.to_string()).zip(ranks).collect(),
        });
    }
    let n_tasks = task_metrics.len() as f64;
    let average_rank = names
        .iter()
        .zip(rank_sums)
        .map(|(e, s)| (e.to_string(), s / n_tasks))
        .collect();

    Ok(MetricsReport {
        runs: by_key
            .into_iter()
            .map(|((embedder, task, seed, metric), value)| RunResult {
                embedder,
                task,
                seed,
                metric,
                value,
            })
            .collect(),
        cells,
        task_ranks,
        average_rank,
    })
}

impl MetricsReport {
    pub fn cell(&self, embedder: &str, task: &str, metric: &str) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.embedder == embedder && c.task == task && c.metric == metric)
    }

    pub fn embedders(&self) -> Vec<&str> {
        self.average_rank.keys().map(String::as_str).collect()
    }

    pub fn tasks(&self) -> Vec<&str> {
        self.task_ranks.iter().map(|t| t.task.as_str()).collect()
    }

    /// Mean over tasks of the per-task mean of `metric`; tasks without the
    /// metric are skipped.
    pub fn mean_over_tasks(&self, embedder: &str, metric: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.embedder == embedder && c.metric == metric)
            .map(|c| c.mean)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Long form: `embedder,task,seed,metric,value`.
    pub fn to_csv(&self) -> String {
        runs_to_csv(&self.runs)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn runs_to_csv(runs: &[RunResult]) -> String {
    let mut out = String::from("embedder,task,seed,metric,value\n");
    for r in runs {
        out.push_str(&format!("{},{},{},{},{}\n", r.embedder, r.task, r.seed, r.metric, r.value));
    }
    out
}

/// Parse the long-form CSV written by [`MetricsReport::to_csv`].
pub fn parse_runs_csv(text: &str, path: &Path) -> Result<Vec<RunResult>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .clone();
    let expected = ["embedder", "task", "seed", "metric", "value"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::format(path, format!("expected header {}", expected.join(","))));
    }
    let mut runs = Vec::new();
    for (i, rec) in reader.deserialize::<RunResult>().enumerate() {
        runs.push(rec.map_err(|e| Error::format(path, format!("row {}: {e}", i + 2)))?);
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(e: &str, t: &str, seed: u64, v: f64) -> RunResult {
        RunResult {
            embedder: e.into(),
            task: t.into(),
            seed,
            metric: "accuracy".into(),
            value: v,
        }
    }

    #[test]
    fn csv_roundtrip() {
        let runs = vec![run("a", "t", 0, 0.125), run("b", "t", 0, 1.0 / 3.0)];
        let back = parse_runs_csv(&runs_to_csv(&runs), Path::new("x.csv")).unwrap();
        assert_eq!(back, runs);
        assert!(parse_runs_csv("a,b\n1,2\n", Path::new("x.csv")).is_err());
    }
}
