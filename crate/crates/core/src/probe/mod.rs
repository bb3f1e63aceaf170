//! Downstream evaluation of frozen embeddings with small feed-forward probes.

mod metrics;
mod report;
mod train;

pub use metrics::{accuracy, auroc, descending_ranks, mean_std, r_squared};
pub use report::{aggregate_runs, parse_runs_csv, runs_to_csv, CellSummary, MetricsReport, RunResult, TaskRanking, RANK_METRICS};
pub use train::{train_probe, ProbeConfig, ProbeFit, ProbeModel, TaskKind};

use crate::datastore::{make_splits, Labels};
use crate::error::Result;
use crate::numkit::Matrix;

/// Probe every task under every seed and return the flat results for one embedder.
pub fn evaluate_embedder(
    embedder: &str,
    embeddings: &Matrix,
    tasks: &[(String, Labels)],
    cfg: &ProbeConfig,
) -> Result<Vec<RunResult>> {
    let mut out = Vec::new();
    for (task, labels) in tasks {
        for &seed in &cfg.seeds {
            let splits = make_splits(embeddings.rows(), cfg.split, seed)?;
            let fit = train_probe(embeddings, labels, &splits, cfg)?;
            for (metric, value) in fit.test {
                out.push(RunResult {
                    embedder: embedder.to_string(),
                    task: task.clone(),
                    seed,
                    metric,
                    value,
                });
            }
        }
    }
    Ok(out)
}
