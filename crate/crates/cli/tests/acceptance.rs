//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails. Criteria run sequentially so the
//! timing measurement is not disturbed by concurrent training.

// `ensure!` negates arbitrary comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use mtdistill::datastore::{make_splits, quantize, read_embeddings, write_embeddings, EmbeddingDataset, Labels, DEFAULT_RATIOS};
use mtdistill::kernels::{
    disagreement_bound, gaussian_nll_value, mse_loss, EntropyEstimate, GaussianHead, LossKind,
};
use mtdistill::numkit::{finite_diff_check, Matrix, Parameters};
use mtdistill::probe::{accuracy, auroc, evaluate_embedder, r_squared, runs_to_csv, RunResult};
use mtdistill::rng;
use mtdistill::synthbench::{
    empirical_disagreement, generate_teachers, generate_world, preset, run_comparison, ComparisonReport, FixtureSpec,
    SynthWorld,
};
use mtdistill::trainer::{
    checkpoint_roundtrip, initial_checkpoint, resume_distill, train_distill, Checkpoint, DistillModel, Heads,
    TrainConfig,
};
use mtdistill_cli::run_with;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

const FIXTURE_SEED: u64 = 7;

/// Standard fixture shared by the comparison criteria.
struct Fixture {
    spec: FixtureSpec,
    world: SynthWorld,
    data: EmbeddingDataset,
    report: ComparisonReport,
    elapsed: Duration,
}

impl Fixture {
    fn run() -> Result<Self, String> {
        let spec = ok(preset("standard", FIXTURE_SEED))?;
        let start = Instant::now();
        let world = ok(generate_world(&spec.world))?;
        let data = ok(generate_teachers(&world, &spec.teachers))?;
        let report = ok(run_comparison(&world, &data, &spec.cells, &spec.train, &spec.probe, &mut |m| {
            eprintln!("  [{:6.1}s] {m}", start.elapsed().as_secs_f64())
        }))?;
        Ok(Self {
            spec,
            world,
            data,
            report,
            elapsed: start.elapsed(),
        })
    }

    fn accuracy(&self, cell: &str) -> Result<f64, String> {
        self.report
            .metrics
            .mean_over_tasks(cell, "accuracy")
            .ok_or_else(|| format!("no accuracy for {cell}"))
    }

    fn cell_names(&self) -> Vec<String> {
        self.report.cells.iter().map(|c| c.name.clone()).collect()
    }

    fn find(&self, pred: impl Fn(&mtdistill::synthbench::ExperimentCell) -> bool) -> Vec<String> {
        self.report.cells.iter().filter(|c| pred(&c.cell)).map(|c| c.name.clone()).collect()
    }

    /// Config used for cell `index`, mirroring the comparison driver.
    fn cell_config(&self, index: usize) -> TrainConfig {
        let cell = &self.report.cells[index].cell;
        TrainConfig {
            seed: self.spec.train.seed ^ index as u64,
            loss: cell.loss,
            head_depth: cell.head_depth,
            ..self.spec.train.clone()
        }
    }
}

// Gradient suite ------------------------------------------------------------

fn random_model(loss: LossKind, r: &mut rng::Rng) -> (DistillModel, Matrix, Vec<Matrix>) {
    loop {
        let d_in = r.random_range(1..=5);
        let hidden: Vec<usize> = (0..r.random_range(0..=2)).map(|_| r.random_range(2..=6)).collect();
        let student_dim = r.random_range(1..=5);
        let k = r.random_range(1..=3);
        let dims: Vec<usize> = (0..k).map(|_| r.random_range(1..=5)).collect();
        let batch = r.random_range(1..=5);
        let config = TrainConfig {
            loss,
            student_hidden: hidden,
            student_dim,
            head_depth: r.random_range(1..=3),
            head_hidden: r.random_range(2..=6),
            ..TrainConfig::default()
        };
        let model = DistillModel::init(&config, d_in, &dims, r).unwrap();
        let x = Matrix::from_fn(batch, d_in, |_, _| r.random_range(-1.0..1.0));
        let teachers: Vec<Matrix> = dims
            .iter()
            .map(|&d| Matrix::from_fn(batch, d, |_, _| StandardNormal.sample(&mut *r)))
            .collect();
        // Keep finite-difference probes away from rectifier kinks.
        let (s, tape) = model.student.forward(&x).unwrap();
        let mut margin = tape.min_abs_hidden_preactivation();
        match &model.heads {
            Heads::Gaussian(heads) => {
                for h in heads {
                    margin = margin.min(h.mlp.forward(&s).unwrap().1.min_abs_hidden_preactivation());
                }
            }
            // Cosine is singular at a zero vector and clamped just above it.
            Heads::Adapters(adapters) if matches!(loss, LossKind::Cosine { .. }) => {
                for a in adapters {
                    let out = a.apply(&s).unwrap();
                    for b in 0..batch {
                        let norm = out.row(b).iter().map(|v| v * v).sum::<f64>().sqrt();
                        margin = margin.min(norm / 50.0);
                    }
                }
            }
            Heads::Adapters(_) => {}
        }
        if margin > 1e-3 {
            return (model, x, teachers);
        }
    }
}

fn flatten_model(m: &DistillModel) -> Vec<f64> {
    let mut flat = m.student.flatten();
    for h in m.heads.params() {
        flat.extend(h.flatten());
    }
    flat
}

fn assign_model(m: &mut DistillModel, flat: &[f64]) {
    let n = m.student.num_params();
    m.student.assign_flat(&flat[..n]);
    let mut offset = n;
    for h in m.heads.params_mut() {
        let len = h.num_params();
        h.assign_flat(&flat[offset..offset + len]);
        offset += len;
    }
}

fn criterion_gradients() -> Outcome {
    let start = Instant::now();
    let mut summary = Vec::new();
    for (i, loss) in [LossKind::Nll, LossKind::Mse, LossKind::Cosine { eps: LossKind::DEFAULT_COSINE_EPS }]
        .into_iter()
        .enumerate()
    {
        let mut r = rng::stream(1000 + i as u64, 0);
        let mut worst = 0.0f64;
        for case in 0..100 {
            let (model, x, teachers) = random_model(loss, &mut r);
            let f = |flat: &[f64]| {
                let mut m = model.clone();
                assign_model(&mut m, flat);
                let g = m.gradients(loss, &x, &teachers).unwrap();
                let mut grad = g.student.flatten();
                for h in g.heads.params() {
                    grad.extend(h.flatten());
                }
                (g.loss, grad)
            };
            let report = finite_diff_check(f, &flatten_model(&model), 1e-4, 1e-4);
            ensure!(report.passed, "{} case {case}: {report:?}", loss.name());
            worst = worst.max(report.rel_error);
        }
        summary.push(format!("{} worst {worst:.1e}", loss.name()));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 120.0, "gradient suite took {secs:.1}s");
    Ok(format!("300 configurations, {}, {secs:.1}s", summary.join(", ")))
}

// Closed-form and inequality checks ------------------------------------------

fn criterion_nll_mse_identity() -> Outcome {
    let mut r = rng::stream(2000, 0);
    let mut worst = 0.0f64;
    for case in 0..20 {
        let d = r.random_range(1..=8);
        let batch = r.random_range(1..=16);
        let s = Matrix::from_fn(batch, d, |_, _| StandardNormal.sample(&mut r));
        let t = Matrix::from_fn(batch, d, |_, _| {
            let z: f64 = StandardNormal.sample(&mut r);
            2.0 * z
        });
        let head = ok(GaussianHead::identity_unit_variance(0, d, 1e-6))?;
        let h = ok(gaussian_nll_value(&[head], &s, std::slice::from_ref(&t)))?.per_teacher[0];
        let mse = ok(mse_loss(&s, &[t]))?.per_teacher[0];
        let expected = mse / 2.0 + d as f64 / 2.0 * (2.0 * std::f64::consts::PI).ln();
        let err = (h - expected).abs();
        ensure!(err < 1e-9, "case {case}: nll {h} vs {expected}");
        worst = worst.max(err);
    }
    Ok(format!("20 cases, worst |diff| {worst:.1e}"))
}

fn criterion_jensen() -> Outcome {
    let mut r = rng::stream(3000, 0);
    let mut tightest = f64::INFINITY;
    for case in 0..10_000 {
        let k = r.random_range(1..=8);
        let scale = [0.01, 1.0, 10.0][case % 3];
        let h: Vec<f64> = (0..k).map(|_| scale * r.random::<f64>()).collect();
        let b = disagreement_bound(&EntropyEstimate::from_terms(h.clone(), 1));
        let mean_of_bounds = b.per_teacher.iter().sum::<f64>() / k as f64;
        ensure!(mean_of_bounds <= b.averaged + 1e-12, "case {case}: h {h:?}");
        tightest = tightest.min(b.averaged - mean_of_bounds);
    }
    Ok(format!("10000 vectors, smallest gap {tightest:.1e}"))
}

fn criterion_metric_oracles() -> Outcome {
    let a = ok(auroc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]))?;
    ensure!(a == 0.75, "auroc {a}");
    let targets = [-1.5, -0.5, 0.5, 1.5];
    let preds: Vec<f64> = targets.iter().map(|t| -t).collect();
    let r2 = ok(r_squared(&preds, &targets))?;
    ensure!((r2 + 3.0).abs() < 1e-12, "r2 {r2}");
    let acc = ok(accuracy(&[0, 1, 1, 0], &[0, 1, 0, 0]))?;
    ensure!(acc == 0.75, "accuracy {acc}");

    let mut r = rng::stream(9000, 0);
    for case in 0..100 {
        let n = r.random_range(10..=200);
        let scores: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
        let mut positive: Vec<bool> = (0..n).map(|_| r.random_bool(0.4)).collect();
        positive[0] = true;
        positive[1] = false;
        let base = ok(auroc(&scores, &positive))?;
        let (a, b) = (r.random_range(0.1..5.0), r.random_range(-3.0..3.0));
        let transform: Box<dyn Fn(f64) -> f64> = match case % 4 {
            0 => Box::new(move |x| a * x + b),
            1 => Box::new(move |x| (a * x).exp()),
            2 => Box::new(move |x| (a * x).tanh() + b),
            _ => Box::new(move |x| x * x * x + a * x),
        };
        let moved: Vec<f64> = scores.iter().map(|&x| transform(x)).collect();
        let after = ok(auroc(&moved, &positive))?;
        ensure!(after == base, "transform {case}: {base} -> {after}");
    }
    Ok("auroc 0.75, r2 -3.0, accuracy 0.75, 100 monotone transforms invariant".into())
}

// Determinism and formats -----------------------------------------------------

fn cli(args: &[&str]) -> Result<String, String> {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run_with(std::iter::once("mtdistill").chain(args.iter().copied()), &mut out, &mut err);
    ensure!(code == 0, "mtdistill {}: exit {code}: {}", args.join(" "), String::from_utf8_lossy(&err));
    Ok(String::from_utf8_lossy(&out).into_owned())
}

fn criterion_determinism(fx: &Fixture, dir: &Path) -> Outcome {
    // Retrain the first comparison cell and re-probe it.
    let cfg = fx.cell_config(0);
    let subset = ok(fx.data.with_teachers(&fx.report.cells[0].cell.teachers))?;
    let again = ok(train_distill(&cfg, &subset))?;
    let original = &fx.report.checkpoints[0];
    ensure!(ok(again.to_bytes())? == ok(original.to_bytes())?, "retrained checkpoint bytes differ");
    let name = &fx.report.cells[0].name;
    let emb = ok(again.model.embed(&fx.data.base))?;
    let mut rerun = ok(evaluate_embedder(name, &emb, &fx.world.task_labels(), &fx.spec.probe))?;
    let mut cached: Vec<RunResult> = fx.report.metrics.runs.iter().filter(|r| &r.embedder == name).cloned().collect();
    let key = |r: &RunResult| (r.task.clone(), r.seed, r.metric.clone());
    rerun.sort_by_key(key);
    cached.sort_by_key(key);
    ensure!(runs_to_csv(&rerun) == runs_to_csv(&cached), "re-probed metrics differ");

    // Whole-pipeline metric CSVs through the CLI.
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.join(run);
        cli(&["synth", "--preset", "small", "--seed", "11", "--out", out.to_str().unwrap()])?;
        csvs.push(ok(std::fs::read(out.join("metrics.csv")))?);
    }
    ensure!(csvs[0] == csvs[1], "synth metrics.csv differs between runs");

    // Format round-trips.
    let path = dir.join("teacher.emb1");
    let t = quantize(&fx.data.teachers[0].embeddings);
    let labels = fx.world.tasks[0].labels().clone();
    ok(write_embeddings(&t, Some(&labels), &path))?;
    let (back, back_labels) = ok(read_embeddings(&path))?;
    ensure!(back == t && back_labels == Some(labels), "EMB1 round-trip differs");
    let reloaded = ok(checkpoint_roundtrip(original, dir.join("c.mtck")))?;
    ensure!(&reloaded == original, "checkpoint round-trip differs");

    // Resume equivalence on the small preset.
    let small = ok(preset("small", 5))?;
    let world = ok(generate_world(&small.world))?;
    let data = ok(generate_teachers(&world, &small.teachers))?;
    let cfg = TrainConfig {
        epochs: 4,
        ..small.train.clone()
    };
    let full = ok(train_distill(&cfg, &data))?;
    let half = ok(train_distill(&TrainConfig { epochs: 2, ..cfg.clone() }, &data))?;
    let half = ok(checkpoint_roundtrip(&half, dir.join("half.mtck")))?;
    let resumed = ok(resume_distill(half, &data, 4, &mut |_: &Checkpoint| Ok(())))?;
    ensure!(ok(resumed.to_bytes())? == ok(full.to_bytes())?, "resumed checkpoint differs");
    Ok("retrained checkpoint and probe CSV identical, synth CSVs identical, EMB1/checkpoint/resume exact".into())
}

// Fixture comparisons ---------------------------------------------------------

fn criterion_multi_teacher(fx: &Fixture) -> Outcome {
    let all = fx.find(|c| c.loss == LossKind::Nll && c.teachers.len() == 4 && c.head_depth == 3);
    let singles = fx.find(|c| c.loss == LossKind::Nll && c.teachers.len() == 1);
    ensure!(all.len() == 1 && singles.len() == 4, "unexpected cells {:?}", fx.cell_names());
    let multi = fx.accuracy(&all[0])?;
    let mut best = (String::new(), f64::NEG_INFINITY);
    for s in &singles {
        let a = fx.accuracy(s)?;
        if a > best.1 {
            best = (s.clone(), a);
        }
    }
    let gain = 100.0 * (multi - best.1);
    let mins = fx.elapsed.as_secs_f64() / 60.0;
    ensure!(gain >= 2.0, "K=4 {multi:.4} vs best single {} {:.4}: gain {gain:.2} points", best.0, best.1);
    ensure!(mins < 15.0, "fixture took {mins:.1} min");
    Ok(format!(
        "K=4 {multi:.4} vs best single ({}) {:.4}: +{gain:.2} points, fixture {mins:.1} min",
        best.0, best.1
    ))
}

fn criterion_loss_comparison(fx: &Fixture) -> Outcome {
    let pick = |pred: &dyn Fn(LossKind) -> bool| -> Result<String, String> {
        let found = fx.find(|c| pred(c.loss) && c.teachers.len() == 4 && (c.loss != LossKind::Nll || c.head_depth == 3));
        found.into_iter().next().ok_or_else(|| "missing cell".to_string())
    };
    let nll = pick(&|l| l == LossKind::Nll)?;
    let mse = pick(&|l| l == LossKind::Mse)?;
    let cos = pick(&|l| matches!(l, LossKind::Cosine { .. }))?;
    let a_nll = fx.accuracy(&nll)?;
    let mut parts = vec![format!("nll {a_nll:.4}")];
    for other in [&mse, &cos] {
        let a = fx.accuracy(other)?;
        parts.push(format!("{} {a:.4}", other.split('-').next().unwrap()));
        ensure!(a_nll >= a, "nll {a_nll:.4} < {other} {a:.4}");
        if a_nll == a {
            let tasks = fx.report.metrics.tasks();
            let wins = tasks
                .iter()
                .filter(|t| {
                    let m = |e: &str| fx.report.metrics.cell(e, t, "accuracy").map(|c| c.mean).unwrap_or(f64::NAN);
                    m(&nll) > m(other)
                })
                .count();
            ensure!(2 * wins >= tasks.len(), "tied with {other} and wins only {wins}/{} tasks", tasks.len());
        }
    }
    Ok(parts.join(", "))
}

fn criterion_head_depth(fx: &Fixture) -> Outcome {
    let mut acc = BTreeMap::new();
    for depth in [2, 3, 5] {
        let cell = fx.find(|c| c.loss == LossKind::Nll && c.teachers.len() == 4 && c.head_depth == depth);
        ensure!(cell.len() == 1, "missing depth {depth}");
        acc.insert(depth, fx.accuracy(&cell[0])?);
    }
    let max = acc.values().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = acc.values().cloned().fold(f64::INFINITY, f64::min);
    let spread = 100.0 * (max - min);
    let listed: Vec<String> = acc.iter().map(|(d, a)| format!("h{d} {a:.4}")).collect();
    ensure!(spread < 2.0, "{}: spread {spread:.2} points", listed.join(", "));
    Ok(format!("{}: spread {spread:.2} points", listed.join(", ")))
}

fn criterion_entropy_disagreement(fx: &Fixture) -> Outcome {
    let cell = &fx.report.cells[0];
    ensure!(cell.cell.loss == LossKind::Nll && cell.cell.teachers.len() == 4, "first cell is {}", cell.name);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (h0, h1) = (mean(&cell.initial_val_terms), mean(&cell.final_val_terms));

    let cfg = fx.cell_config(0);
    let subset = ok(fx.data.with_teachers(&cell.cell.teachers))?;
    let init = ok(initial_checkpoint(&cfg, &subset))?;
    let trained = &fx.report.checkpoints[0];
    let teachers: Vec<Matrix> = subset.teachers.iter().map(|t| t.embeddings.clone()).collect();
    let splits = ok(make_splits(subset.n(), DEFAULT_RATIOS, 0))?;
    let mut rates = Vec::new();
    for ck in [&init, trained] {
        let s = ok(ck.model.embed(&subset.base))?;
        let mut per_task = Vec::new();
        for (_, labels) in fx.world.task_labels() {
            if matches!(labels, Labels::Classes(_)) {
                per_task.push(ok(empirical_disagreement(&s, &teachers, &labels, &splits, &fx.spec.probe, None))?.mean_rate);
            }
        }
        rates.push(mean(&per_task));
    }
    let detail = format!("mean h {h0:.3} -> {h1:.3}, disagreement {:.4} -> {:.4}", rates[0], rates[1]);
    ensure!(h1 < h0 && rates[1] < rates[0], "{detail}");
    Ok(detail)
}

fn criterion_timing(dir: &Path) -> Outcome {
    let out = dir.join("timing");
    cli(&["timing", "--preset", "standard", "--seed", "7", "--out", out.to_str().unwrap()])?;
    let json: serde_json::Value = ok(serde_json::from_str(&ok(std::fs::read_to_string(out.join("timing.json")))?))?;
    let slope = json["fit"]["slope"].as_f64().ok_or("no slope")?;
    let intercept = json["fit"]["intercept"].as_f64().ok_or("no intercept")?;
    let rows = json["rows"].as_array().map_or(0, Vec::len);
    ensure!(rows >= 2, "only {rows} timing rows");
    let detail = format!(
        "{rows} teacher counts, slope {:.4} ms/teacher, intercept {:.4} ms",
        1e3 * slope,
        1e3 * intercept
    );
    ensure!(slope >= 0.0, "{detail}");
    Ok(detail)
}

#[test]
fn acceptance_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut record = |label: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        eprintln!("  {label} finished in {:.1}s", start.elapsed().as_secs_f64());
        results.push((label, outcome));
    };

    record("1 gradient suite", &mut criterion_gradients);
    record("2 nll/mse identity", &mut criterion_nll_mse_identity);
    record("3 bound concavity", &mut criterion_jensen);
    record("9 metric oracles", &mut criterion_metric_oracles);
    record("10 per-teacher timing", &mut || criterion_timing(dir.path()));

    match Fixture::run() {
        Ok(fx) => {
            record("4 multi-teacher gain", &mut || criterion_multi_teacher(&fx));
            record("5 loss comparison", &mut || criterion_loss_comparison(&fx));
            record("6 head-depth robustness", &mut || criterion_head_depth(&fx));
            record("7 entropy and disagreement", &mut || criterion_entropy_disagreement(&fx));
            record("8 determinism and formats", &mut || criterion_determinism(&fx, dir.path()));
        }
        Err(e) => {
            for label in [
                "4 multi-teacher gain",
                "5 loss comparison",
                "6 head-depth robustness",
                "7 entropy and disagreement",
                "8 determinism and formats",
            ] {
                record(label, &mut || Err(format!("fixture failed: {e}")));
            }
        }
    }

    // Written to the raw handle so the lines survive the harness's output capture.
    results.sort_by_key(|(label, _)| label.split(' ').next().unwrap().parse::<u32>().unwrap());
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout).unwrap();
    for (label, outcome) in &results {
        match outcome {
            Ok(detail) => writeln!(stdout, "PASS criterion {label}: {detail}").unwrap(),
            Err(detail) => writeln!(stdout, "FAIL criterion {label}: {detail}").unwrap(),
        }
    }
    let failed: Vec<&str> = results.iter().filter(|(_, o)| o.is_err()).map(|(l, _)| *l).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
