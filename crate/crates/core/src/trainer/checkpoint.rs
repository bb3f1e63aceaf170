//! Checkpoint container.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic      4 bytes   "MTCK"
//! version    u32       1
//! hash       32 bytes  SHA-256 of the canonical JSON config
//! meta_len   u64
//! meta       meta_len bytes of JSON: config, epoch, teacher names, history,
//!            architecture and optimizer step counters
//! n_blobs    u64
//! blobs      n_blobs × (u64 length, length × f64)
//! ```
//!
//! Blobs hold every numeric tensor at full 64-bit precision in this order:
//! student parameters, head parameters (teacher order), student Adam first
//! then second moments, then each head's Adam first and second moments.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{hex, TrainConfig};
use super::model::{DistillModel, Heads};
use crate::datastore::write_atomic;
use crate::error::{Error, Result};
use crate::kernels::{Adapter, GaussianHead};
use crate::numkit::{AdamConfig, AdamState, Matrix, MlpParams, Parameters};

const MAGIC: &[u8; 4] = b"MTCK";
const VERSION: u32 = 1;

/// One row of the loss history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Validation term per teacher (`h_k` for the NLL objective).
    pub per_teacher: Vec<f64>,
}

/// Full training state: parameters, optimizer moments and history.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub config_hash: String,
    /// Completed epochs.
    pub epoch: usize,
    pub teacher_names: Vec<String>,
    pub model: DistillModel,
    pub student_opt: AdamState,
    pub head_opts: Vec<AdamState>,
    pub history: Vec<EpochRecord>,
}

#[derive(Serialize, Deserialize)]
enum HeadLayout {
    Gaussian { dims: Vec<Vec<usize>>, var_floor: Vec<f64> },
    /// `None` for identity adapters, `(d, d_k)` for linear ones.
    Adapters { dims: Vec<Option<(usize, usize)>> },
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: TrainConfig,
    epoch: usize,
    teacher_names: Vec<String>,
    history: Vec<EpochRecord>,
    student_dims: Vec<usize>,
    heads: HeadLayout,
    student_adam: (AdamConfig, u64),
    head_adam: Vec<(AdamConfig, u64)>,
}

impl Checkpoint {
    /// Append per-epoch record; keeps `epoch == history.len()`.
    pub(crate) fn push_record(&mut self, record: EpochRecord) {
        self.history.push(record);
        self.epoch = self.history.len();
    }

    /// `epoch,train_loss,val_loss,h_1..h_K` with one row per completed epoch.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss");
        for k in 1..=self.teacher_names.len() {
            out.push_str(&format!(",h_{k}"));
        }
        out.push('\n');
        for r in &self.history {
            out.push_str(&format!("{},{:?},{:?}", r.epoch, r.train_loss, r.val_loss));
            for h in &r.per_teacher {
                out.push_str(&format!(",{h:?}"));
            }
            out.push('\n');
        }
        out
    }

    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = self.model.student.tensors();
        for h in self.model.heads.params() {
            out.extend(h.tensors());
        }
        for s in std::iter::once(&self.student_opt).chain(&self.head_opts) {
            out.extend(s.first_moment.iter().map(Vec::as_slice));
            out.extend(s.second_moment.iter().map(Vec::as_slice));
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let heads = match &self.model.heads {
            Heads::Gaussian(h) => HeadLayout::Gaussian {
                dims: h.iter().map(|x| x.mlp.dims()).collect(),
                var_floor: h.iter().map(|x| x.var_floor).collect(),
            },
            Heads::Adapters(a) => HeadLayout::Adapters {
                dims: a
                    .iter()
                    .map(|x| match x {
                        Adapter::Identity => None,
                        Adapter::Linear(w) => Some(w.shape()),
                    })
                    .collect(),
            },
        };
        let meta = Meta {
            config: self.config.clone(),
            epoch: self.epoch,
            teacher_names: self.teacher_names.clone(),
            history: self.history.clone(),
            student_dims: self.model.student.dims(),
            heads,
            student_adam: (self.student_opt.config, self.student_opt.step),
            head_adam: self.head_opts.iter().map(|s| (s.config, s.step)).collect(),
        };
        let meta_json = serde_json::to_vec(&meta)
            .map_err(|e| Error::NonFinite(format!("checkpoint metadata: {e}")))?;

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.config.hash_bytes());
        out.extend_from_slice(&(meta_json.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta_json);
        let tensors = self.tensors();
        out.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
        for t in tensors {
            out.extend_from_slice(&(t.len() as u64).to_le_bytes());
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0, path };
        if cur.take(4)? != MAGIC {
            return Err(Error::format(path, "not a checkpoint (bad magic)"));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::StaleCheckpoint {
                path: path.into(),
                message: format!("checkpoint version {version}, this build reads {VERSION}"),
            });
        }
        let stored_hash: [u8; 32] = cur.take(32)?.try_into().unwrap();
        let meta_len = cur.u64()? as usize;
        let meta: Meta = serde_json::from_slice(cur.take(meta_len)?)
            .map_err(|e| Error::format(path, format!("metadata: {e}")))?;
        let expected = meta.config.hash_bytes();
        if stored_hash != expected {
            return Err(Error::StaleCheckpoint {
                path: path.into(),
                message: format!(
                    "config hash {} does not match stored config ({})",
                    hex(&stored_hash),
                    hex(&expected)
                ),
            });
        }
        if meta.history.len() != meta.epoch {
            return Err(Error::format(path, "history length differs from epoch count"));
        }

        let student = MlpParams::zeros(&meta.student_dims)?;
        let heads = match &meta.heads {
            HeadLayout::Gaussian { dims, var_floor } => Heads::Gaussian(
                dims.iter()
                    .zip(var_floor)
                    .enumerate()
                    .map(|(k, (d, &f))| GaussianHead::from_mlp(k, MlpParams::zeros(d)?, f))
                    .collect::<Result<_>>()?,
            ),
            HeadLayout::Adapters { dims } => Heads::Adapters(
                dims.iter()
                    .map(|d| match d {
                        None => Adapter::Identity,
                        Some((r, c)) => Adapter::Linear(Matrix::zeros(*r, *c)),
                    })
                    .collect(),
            ),
        };
        let mut model = DistillModel { student, heads };
        let mut student_opt = AdamState::new(&model.student, meta.student_adam.0);
        student_opt.step = meta.student_adam.1;
        let mut head_opts: Vec<AdamState> = model
            .heads
            .params()
            .into_iter()
            .zip(&meta.head_adam)
            .map(|(h, &(cfg, step))| {
                let mut s = AdamState::new(h, cfg);
                s.step = step;
                s
            })
            .collect();
        if head_opts.len() != model.heads.len() {
            return Err(Error::format(path, "optimizer count differs from head count"));
        }

        let n_blobs = cur.u64()? as usize;
        let mut slots: Vec<&mut [f64]> = model.student.tensors_mut();
        for h in model.heads.params_mut() {
            slots.extend(h.tensors_mut());
        }
        for s in std::iter::once(&mut student_opt).chain(head_opts.iter_mut()) {
            slots.extend(s.first_moment.iter_mut().map(Vec::as_mut_slice));
            slots.extend(s.second_moment.iter_mut().map(Vec::as_mut_slice));
        }
        if n_blobs != slots.len() {
            return Err(Error::format(path, format!("{n_blobs} tensors stored, layout needs {}", slots.len())));
        }
        for slot in slots {
            let len = cur.u64()? as usize;
            if len != slot.len() {
                return Err(Error::format(path, format!("tensor of {len} values, layout needs {}", slot.len())));
            }
            for v in slot.iter_mut() {
                *v = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());
            }
        }
        if cur.pos != bytes.len() {
            return Err(Error::format(path, "trailing bytes after checkpoint"));
        }
        Ok(Checkpoint {
            config_hash: meta.config.hash(),
            config: meta.config,
            epoch: meta.epoch,
            teacher_names: meta.teacher_names,
            model,
            student_opt,
            head_opts,
            history: meta.history,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

/// Save then reload.
pub fn checkpoint_roundtrip(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<Checkpoint> {
    checkpoint.save(path.as_ref())?;
    Checkpoint::load(path)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                path: self.path.into(),
                expected: (self.pos as u64).saturating_add(n as u64),
                actual: self.bytes.len() as u64,
            }),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
