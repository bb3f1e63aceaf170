//! Flat `key = value` configuration with command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mtdistill::kernels::LossKind;
use mtdistill::probe::ProbeConfig;
use mtdistill::synthbench::{standard_cells, FixtureSpec};
use mtdistill::trainer::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Count,
    Float,
    Counts,
    Seeds,
    Ratios,
    Loss,
    Path,
    Paths,
}

impl Kind {
    fn expected(self) -> &'static str {
        match self {
            Kind::Count => "a non-negative integer",
            Kind::Float => "a number",
            Kind::Counts => "a comma-separated list of non-negative integers",
            Kind::Seeds => "a comma-separated list of seeds",
            Kind::Ratios => "three comma-separated numbers",
            Kind::Loss => "one of nll, mse, cosine",
            Kind::Path => "a path",
            Kind::Paths => "a comma-separated list of paths",
        }
    }
}

/// Every recognized key.
const KEYS: &[(&str, Kind)] = &[
    ("train.epochs", Kind::Count),
    ("train.batch_size", Kind::Count),
    ("train.lr", Kind::Float),
    ("train.student_hidden", Kind::Counts),
    ("train.student_dim", Kind::Count),
    ("train.val_fraction", Kind::Float),
    ("train.checkpoint_every", Kind::Count),
    ("head.depth", Kind::Count),
    ("head.hidden", Kind::Count),
    ("head.var_floor", Kind::Float),
    ("loss.kind", Kind::Loss),
    ("loss.cosine_eps", Kind::Float),
    ("probe.hidden", Kind::Count),
    ("probe.depth", Kind::Count),
    ("probe.lr", Kind::Float),
    ("probe.batch_size", Kind::Count),
    ("probe.max_epochs", Kind::Count),
    ("probe.min_epochs", Kind::Count),
    ("probe.epoch_budget", Kind::Count),
    ("probe.seeds", Kind::Seeds),
    ("probe.split", Kind::Ratios),
    ("synth.n", Kind::Count),
    ("synth.base_noise", Kind::Float),
    ("synth.teacher_noise", Kind::Float),
    ("synth.depths", Kind::Counts),
    ("data.base", Kind::Path),
    ("data.teachers", Kind::Paths),
    ("data.labels", Kind::Paths),
    ("timing.steps", Kind::Count),
    ("timing.counts", Kind::Counts),
];

fn kind_of(key: &str) -> Option<Kind> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, kind)| *kind)
}

pub fn known_keys() -> impl Iterator<Item = &'static str> {
    KEYS.iter().map(|(k, _)| *k)
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn check_value(key: &str, kind: Kind, value: &str) -> Result<(), CliError> {
    let ok = match kind {
        Kind::Count => value.parse::<usize>().is_ok(),
        Kind::Float => value.parse::<f64>().is_ok_and(f64::is_finite),
        Kind::Counts => split_list(value).all(|v| v.parse::<usize>().is_ok()),
        Kind::Seeds => split_list(value).all(|v| v.parse::<u64>().is_ok()) && split_list(value).next().is_some(),
        Kind::Ratios => {
            let v: Vec<_> = split_list(value).map(str::parse::<f64>).collect();
            v.len() == 3 && v.iter().all(Result::is_ok)
        }
        Kind::Loss => value.parse::<LossKind>().is_ok(),
        Kind::Path => !value.is_empty(),
        Kind::Paths => split_list(value).next().is_some(),
    };
    if ok {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "invalid value '{value}' for key '{key}': expected {}",
            kind.expected()
        )))
    }
}

/// Validated key/value settings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CliConfig {
    values: BTreeMap<String, String>,
}

/// Read `path` (if any) and apply `overrides` on top. Every key and value is
/// checked here, before any work starts.
pub fn parse_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<CliConfig, CliError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let origin = path.map_or_else(|| "<config>".to_string(), |p| p.display().to_string());
    parse_config_str(&text, &origin, overrides)
}

pub fn parse_config_str(text: &str, origin: &str, overrides: &[(String, String)]) -> Result<CliConfig, CliError> {
    let mut values = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::usage(format!("{origin}:{}: expected 'key = value', got '{line}'", i + 1)));
        };
        let (key, value) = (key.trim(), value.trim());
        let kind = kind_of(key).ok_or_else(|| CliError::usage(format!("unknown config key '{key}' ({origin}:{})", i + 1)))?;
        check_value(key, kind, value)?;
        if values.insert(key.to_string(), value.to_string()).is_some() {
            return Err(CliError::usage(format!("duplicate config key '{key}' ({origin}:{})", i + 1)));
        }
    }
    for (key, value) in overrides {
        let kind = kind_of(key).ok_or_else(|| CliError::usage(format!("unknown config key '{key}'")))?;
        check_value(key, kind, value)?;
        values.insert(key.clone(), value.clone());
    }
    Ok(CliConfig { values })
}

impl CliConfig {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, CliError> {
        self.get(key)
            .ok_or_else(|| CliError::usage(format!("missing required key '{key}'")))
    }

    pub fn count(&self, key: &str) -> Option<usize> {
        self.get(key).map(|v| v.parse().expect("validated"))
    }

    fn float(&self, key: &str) -> Option<f64> {
        self.get(key).map(|v| v.parse().expect("validated"))
    }

    pub fn counts(&self, key: &str) -> Option<Vec<usize>> {
        self.get(key).map(|v| split_list(v).map(|x| x.parse().expect("validated")).collect())
    }

    pub fn paths(&self, key: &str) -> Option<Vec<PathBuf>> {
        self.get(key).map(|v| split_list(v).map(PathBuf::from).collect())
    }

    pub fn require_paths(&self, key: &str) -> Result<Vec<PathBuf>, CliError> {
        self.require(key)?;
        Ok(self.paths(key).expect("present"))
    }

    pub fn loss(&self) -> Option<LossKind> {
        let eps = self.float("loss.cosine_eps");
        self.get("loss.kind").map(|v| match v.parse().expect("validated") {
            LossKind::Cosine { eps: default } => LossKind::Cosine { eps: eps.unwrap_or(default) },
            other => other,
        })
    }

    pub fn apply_train(&self, c: &mut TrainConfig) -> Result<(), CliError> {
        if let Some(v) = self.count("train.epochs") {
            c.epochs = v;
        }
        if let Some(v) = self.count("train.batch_size") {
            c.batch_size = v;
        }
        if let Some(v) = self.float("train.lr") {
            c.lr = v;
        }
        if let Some(v) = self.counts("train.student_hidden") {
            c.student_hidden = v;
        }
        if let Some(v) = self.count("train.student_dim") {
            c.student_dim = v;
        }
        if let Some(v) = self.float("train.val_fraction") {
            c.val_fraction = v;
        }
        if let Some(v) = self.count("train.checkpoint_every") {
            c.checkpoint_every = v;
        }
        if let Some(v) = self.count("head.depth") {
            c.head_depth = v;
        }
        if let Some(v) = self.count("head.hidden") {
            c.head_hidden = v;
        }
        if let Some(v) = self.float("head.var_floor") {
            c.var_floor = v;
        }
        if let Some(v) = self.loss() {
            c.loss = v;
        }
        c.validate().map_err(CliError::from)
    }

    pub fn apply_probe(&self, c: &mut ProbeConfig) -> Result<(), CliError> {
        if let Some(v) = self.count("probe.hidden") {
            c.hidden = v;
        }
        if let Some(v) = self.count("probe.depth") {
            c.depth = v;
        }
        if let Some(v) = self.float("probe.lr") {
            c.lr = v;
        }
        if let Some(v) = self.count("probe.batch_size") {
            c.batch_size = v;
        }
        if let Some(v) = self.count("probe.max_epochs") {
            c.max_epochs = v;
        }
        if let Some(v) = self.count("probe.min_epochs") {
            c.min_epochs = v;
        }
        if let Some(v) = self.count("probe.epoch_budget") {
            c.epoch_budget = v;
        }
        if let Some(v) = self.get("probe.seeds") {
            c.seeds = split_list(v).map(|x| x.parse().expect("validated")).collect();
        }
        if let Some(v) = self.get("probe.split") {
            let r: Vec<f64> = split_list(v).map(|x| x.parse().expect("validated")).collect();
            c.split = [r[0], r[1], r[2]];
            mtdistill::datastore::make_splits(100, c.split, 0).map_err(CliError::from)?;
        }
        c.validate().map_err(CliError::from)
    }

    /// Apply training, probe and synthetic-world keys to a fixture.
    pub fn apply_fixture(&self, f: &mut FixtureSpec) -> Result<(), CliError> {
        self.apply_train(&mut f.train)?;
        self.apply_probe(&mut f.probe)?;
        if let Some(v) = self.count("synth.n") {
            f.world.n = v;
        }
        if let Some(v) = self.float("synth.base_noise") {
            f.world.base_noise = v;
        }
        if let Some(v) = self.float("synth.teacher_noise") {
            for t in &mut f.teachers {
                t.noise = v;
            }
        }
        if let Some(depths) = self.counts("synth.depths") {
            f.cells = standard_cells(f.teachers.len(), &depths, f.train.head_depth);
        }
        f.world.validate().map_err(CliError::from)
    }
}
