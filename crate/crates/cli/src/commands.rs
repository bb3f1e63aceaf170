use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mtdistill::datastore::{read_csv, read_embeddings, write_atomic, write_embeddings, EmbeddingDataset, Labels};
use mtdistill::probe::{aggregate_runs, evaluate_embedder, parse_runs_csv, MetricsReport, ProbeConfig};
use mtdistill::synthbench::{generate_teachers, generate_world, preset, run_fixture, PRESETS};
use mtdistill::trainer::{
    eval_loss, history_svg, resume_distill, timing_report, train_distill_with, validation_rows, Checkpoint,
    TrainConfig, MIN_TIMING_STEPS,
};
use mtdistill::Error;

use crate::config::{parse_config, CliConfig};
use crate::CliError;

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "mtdistill", version, about = "Multi-teacher embedding distillation")]
pub struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = parse_key_value)]
    set: Vec<(String, String)>,
    #[command(subcommand)]
    command: Command,
}

fn parse_key_value(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, got '{s}'"))
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Distill a student from teacher embeddings; writes checkpoint and history.
    Train(TrainArgs),
    /// Probe embeddings on labelled tasks; writes a metrics report.
    EvalProbe(EvalProbeArgs),
    /// Run a synthetic-fixture experiment; writes the fixture and metrics.
    Synth(SynthArgs),
    /// Convert a numeric CSV into an EMB1 file.
    IngestCsv(IngestArgs),
    /// Embed base features with a trained student.
    ExportEmbeddings(ExportArgs),
    /// Measure training step time against the number of teachers.
    Timing(TimingArgs),
    /// Merge metric CSVs into an aggregate JSON report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, required = true)]
    seed: u64,
    /// Base features (EMB1).
    #[arg(long)]
    base: Option<String>,
    /// Comma-separated teacher EMB1 files.
    #[arg(long)]
    teachers: Option<String>,
    #[arg(long)]
    loss: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Continue from a checkpoint up to `train.epochs` total epochs.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalProbeArgs {
    /// Comma-separated EMB1 files, one per embedder (named by file stem).
    #[arg(long, required = true)]
    embeddings: String,
    /// Comma-separated EMB1 files with label blocks, one per task.
    #[arg(long)]
    labels: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, required = true)]
    seed: u64,
    #[arg(long, default_value = "standard")]
    preset: String,
    #[arg(long)]
    out: PathBuf,
    /// Also write the world's base features, teachers and task labels as EMB1.
    #[arg(long)]
    export_data: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LabelKind {
    Class,
    Regression,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Column moved into the label block instead of the features.
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long, value_enum, default_value = "class")]
    label_kind: LabelKind,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    base: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TimingArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use a synthetic preset's teachers instead of EMB1 inputs.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    base: Option<String>,
    #[arg(long)]
    teachers: Option<String>,
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Long-form metric CSVs.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Io<'_> {
    fn say(&mut self, line: impl AsRef<str>) {
        let _ = writeln!(self.out, "{}", line.as_ref());
    }

    fn note(&mut self, line: impl AsRef<str>) {
        let _ = writeln!(self.err, "{}", line.as_ref());
    }
}

pub(crate) fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let mut io = Io { out, err };
    let mut overrides = cli.set.clone();
    let mut flag = |key: &str, value: &Option<String>| {
        if let Some(v) = value {
            overrides.push((key.to_string(), v.clone()));
        }
    };
    match &cli.command {
        Command::Train(a) => {
            flag("data.base", &a.base);
            flag("data.teachers", &a.teachers);
            flag("loss.kind", &a.loss);
        }
        Command::EvalProbe(a) => flag("data.labels", &a.labels),
        Command::Timing(a) => {
            flag("data.base", &a.base);
            flag("data.teachers", &a.teachers);
            flag("loss.kind", &a.loss);
        }
        Command::ExportEmbeddings(a) => flag("data.base", &a.base),
        _ => {}
    }
    let cfg = parse_config(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Train(a) => train(&cfg, a, &mut io),
        Command::EvalProbe(a) => eval_probe(&cfg, a, &mut io),
        Command::Synth(a) => synth(&cfg, a, &mut io),
        Command::IngestCsv(a) => ingest_csv(a, &mut io),
        Command::ExportEmbeddings(a) => export_embeddings(&cfg, a, &mut io),
        Command::Timing(a) => timing(&cfg, a, &mut io),
        Command::Report(a) => report(a, &mut io),
    }
}

fn make_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult {
    write_atomic(path, text.as_bytes()).map_err(CliError::from)
}

fn load_dataset(cfg: &CliConfig) -> CliResult<EmbeddingDataset> {
    let base = PathBuf::from(cfg.require("data.base")?);
    let teachers = cfg.require_paths("data.teachers")?;
    Ok(EmbeddingDataset::load(&base, &teachers)?)
}

fn save_run(dir: &Path, ckpt: &Checkpoint) -> CliResult {
    ckpt.save(dir.join("checkpoint.mtck"))?;
    write_text(&dir.join("history.csv"), &ckpt.history_csv())?;
    write_text(&dir.join("history.svg"), &history_svg(ckpt))
}

fn train(cfg: &CliConfig, a: TrainArgs, io: &mut Io) -> CliResult {
    let data = load_dataset(cfg)?;
    make_dir(&a.out)?;
    let ckpt_path = a.out.join("checkpoint.mtck");
    let mut sink = |c: &Checkpoint| c.save(&ckpt_path);
    let result = match &a.resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            if ckpt.config.seed != a.seed {
                return Err(CliError::usage(format!(
                    "--seed {} differs from the checkpoint's seed {}",
                    a.seed, ckpt.config.seed
                )));
            }
            let mut probe = ckpt.config.clone();
            cfg.apply_train(&mut probe)?;
            let total = probe.epochs;
            resume_distill(ckpt, &data, total, &mut sink)
        }
        None => {
            let mut config = TrainConfig {
                seed: a.seed,
                ..TrainConfig::default()
            };
            cfg.apply_train(&mut config)?;
            train_distill_with(&config, &data, &mut sink)
        }
    };
    let ckpt = match result {
        Ok(c) => c,
        Err(Error::Diverged { epoch, last_finite }) => {
            save_run(&a.out, &last_finite)?;
            return Err(CliError::from(Error::Diverged { epoch, last_finite }).with_note(format!(
                "last finite state (epoch {}) saved to {}",
                epoch - 1,
                a.out.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    save_run(&a.out, &ckpt)?;
    let val = validation_rows(&ckpt.config, data.n())?;
    let summary = eval_loss(&ckpt, &data, &val)?;
    let json = serde_json::json!({
        "config": ckpt.config,
        "config_hash": ckpt.config_hash,
        "epochs": ckpt.epoch,
        "teachers": ckpt.teacher_names,
        "validation": summary,
    });
    write_text(&a.out.join("summary.json"), &serde_json::to_string_pretty(&json).expect("json"))?;
    io.say(format!(
        "trained {} epochs ({} loss); validation loss {:.6}; wrote {}",
        ckpt.epoch,
        ckpt.config.loss.name(),
        summary.loss,
        ckpt_path.display()
    ));
    if let Some(b) = &summary.bound {
        io.say(format!(
            "per-teacher h: {:?}; averaged bound {:.6}",
            summary.per_teacher.per_teacher, b.averaged_clamped
        ));
    }
    Ok(())
}

impl CliError {
    fn with_note(mut self, note: String) -> Self {
        self.message = format!("{}; {note}", self.message);
        self
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn write_report(dir: &Path, report: &MetricsReport) -> CliResult {
    write_text(&dir.join("metrics.csv"), &report.to_csv())?;
    write_text(&dir.join("metrics.json"), &report.to_json())
}

fn print_ranks(report: &MetricsReport, io: &mut Io) {
    for e in report.embedders() {
        let acc = report
            .mean_over_tasks(e, "accuracy")
            .map_or(String::new(), |v| format!(" mean accuracy {v:.4}"));
        io.say(format!("{e}: average rank {:.3}{acc}", report.average_rank[e]));
    }
}

fn eval_probe(cfg: &CliConfig, a: EvalProbeArgs, io: &mut Io) -> CliResult {
    let mut probe = ProbeConfig::default();
    cfg.apply_probe(&mut probe)?;
    let label_paths = cfg.require_paths("data.labels")?;
    let embedders: Vec<(String, mtdistill::numkit::Matrix)> = a
        .embeddings
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|p| {
            let path = PathBuf::from(p);
            let (m, _) = read_embeddings(&path)?;
            Ok((stem(&path), m))
        })
        .collect::<Result<_, Error>>()?;
    let mut tasks = Vec::new();
    for path in &label_paths {
        let (_, labels) = read_embeddings(path)?;
        let labels = labels.ok_or_else(|| CliError::data(format!("{}: no label block", path.display())))?;
        tasks.push((stem(path), labels));
    }
    for (name, m) in &embedders {
        for (task, labels) in &tasks {
            if labels.len() != m.rows() {
                return Err(CliError::data(format!(
                    "embedder '{name}' has {} rows but task '{task}' has {} labels",
                    m.rows(),
                    labels.len()
                )));
            }
        }
    }
    make_dir(&a.out)?;
    let mut runs = Vec::new();
    for (name, m) in &embedders {
        runs.extend(evaluate_embedder(name, m, &tasks, &probe)?);
        io.note(format!("probed {name}"));
    }
    let report = aggregate_runs(&runs)?;
    write_report(&a.out, &report)?;
    print_ranks(&report, io);
    Ok(())
}

fn synth(cfg: &CliConfig, a: SynthArgs, io: &mut Io) -> CliResult {
    let mut spec = preset(&a.preset, a.seed)?;
    cfg.apply_fixture(&mut spec)?;
    make_dir(&a.out)?;
    write_text(&a.out.join("fixture.json"), &spec.to_json())?;
    let err = &mut *io.err;
    let (world, report) = run_fixture(&spec, &mut |m| {
        let _ = writeln!(err, "{m}");
    })?;
    write_report(&a.out, &report.metrics)?;
    write_text(
        &a.out.join("cells.json"),
        &serde_json::to_string_pretty(&report.cells).expect("json"),
    )?;
    if a.export_data {
        let dir = a.out.join("data");
        make_dir(&dir.join("tasks"))?;
        let data = generate_teachers(&world, &spec.teachers)?;
        write_embeddings(&world.base_features, None, dir.join("base.emb1"))?;
        for t in &data.teachers {
            write_embeddings(&t.embeddings, None, dir.join(format!("{}.emb1", t.name)))?;
        }
        for t in &world.tasks {
            write_embeddings(&world.base_features, Some(t.labels()), dir.join("tasks").join(format!("{}.emb1", t.name)))?;
        }
    }
    print_ranks(&report.metrics, io);
    Ok(())
}

fn ingest_csv(a: IngestArgs, io: &mut Io) -> CliResult {
    let table = read_csv(&a.input)?;
    let (features, labels) = match &a.label_column {
        None => (table.values, None),
        Some(col) => {
            let (rest, values) = table.take_column(col)?;
            let labels = match a.label_kind {
                LabelKind::Regression => Labels::Regression(values),
                LabelKind::Class => Labels::Classes(
                    values
                        .iter()
                        .enumerate()
                        .map(|(i, &v)| {
                            if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                                Ok(v as u32)
                            } else {
                                Err(CliError::data(format!(
                                    "{}: line {}: class label {v} is not a non-negative integer",
                                    a.input.display(),
                                    i + 2
                                )))
                            }
                        })
                        .collect::<CliResult<_>>()?,
                ),
            };
            (rest.values, Some(labels))
        }
    };
    write_embeddings(&features, labels.as_ref(), &a.out)?;
    io.say(format!(
        "wrote {} rows x {} columns to {}",
        features.rows(),
        features.cols(),
        a.out.display()
    ));
    Ok(())
}

fn export_embeddings(cfg: &CliConfig, a: ExportArgs, io: &mut Io) -> CliResult {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let base = PathBuf::from(cfg.require("data.base")?);
    let (x, labels) = read_embeddings(&base)?;
    let s = ckpt.model.embed(&x)?;
    write_embeddings(&s, labels.as_ref(), &a.out)?;
    io.say(format!("wrote {} x {} student embeddings to {}", s.rows(), s.cols(), a.out.display()));
    Ok(())
}

fn timing(cfg: &CliConfig, a: TimingArgs, io: &mut Io) -> CliResult {
    let (mut config, data) = match &a.preset {
        Some(name) => {
            let spec = preset(name, a.seed)?;
            let world = generate_world(&spec.world)?;
            (spec.train.clone(), generate_teachers(&world, &spec.teachers)?)
        }
        None => (
            TrainConfig {
                seed: a.seed,
                ..TrainConfig::default()
            },
            load_dataset(cfg).map_err(|e| {
                if e.kind == crate::ExitKind::Usage {
                    CliError::usage(format!("{e} (or pass --preset, one of {})", PRESETS.join(", ")))
                } else {
                    e
                }
            })?,
        ),
    };
    cfg.apply_train(&mut config)?;
    let counts = cfg
        .counts("timing.counts")
        .unwrap_or_else(|| (1..=data.num_teachers()).collect());
    let steps = cfg.count("timing.steps").unwrap_or(MIN_TIMING_STEPS);
    make_dir(&a.out)?;
    let report = timing_report(&config, &data, &counts, steps)?;
    write_text(&a.out.join("timing.csv"), &report.to_csv())?;
    write_text(&a.out.join("timing.json"), &serde_json::to_string_pretty(&report).expect("json"))?;
    io.say(report.summary());
    Ok(())
}

fn report(a: ReportArgs, io: &mut Io) -> CliResult {
    let mut runs = Vec::new();
    for path in &a.inputs {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        runs.extend(parse_runs_csv(&text, path)?);
    }
    let report = aggregate_runs(&runs)?;
    write_text(&a.out, &report.to_json())?;
    print_ranks(&report, io);
    Ok(())
}
