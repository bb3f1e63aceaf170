use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_RATIOS: [f64; 3] = [0.7, 0.1, 0.2];

/// Disjoint train/validation/test index lists covering `[0, n)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    /// Ratios in parts per million, so the spec stays `Eq`.
    ratios_ppm: [u32; 3],
}

impl SplitSpec {
    pub fn ratios(&self) -> [f64; 3] {
        self.ratios_ppm.map(|r| r as f64 / 1e6)
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Seeded random split. Validation and test sizes are `floor(n · ratio)`;
/// the remainder goes to train.
pub fn make_splits(n: usize, ratios: [f64; 3], seed: u64) -> Result<SplitSpec> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Usage(format!("split ratios must be in [0,1] and sum to 1, got {ratios:?}")));
    }
    let n_val = (n as f64 * ratios[1] + 1e-9).floor() as usize;
    let n_test = (n as f64 * ratios[2] + 1e-9).floor() as usize;
    let n_train = n.saturating_sub(n_val + n_test);
    if n < 3 || n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::Usage(format!(
            "{n} samples are too few for non-empty splits with ratios {ratios:?}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(seed, rng::STREAM_SPLIT));
    let test = perm.split_off(n_train + n_val);
    let val = perm.split_off(n_train);
    Ok(SplitSpec {
        train: perm,
        val,
        test,
        seed,
        ratios_ppm: ratios.map(|r| (r * 1e6).round() as u32),
    })
}

/// Seeded two-way split holding out `floor(n · fraction)` samples (at least one).
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Usage(format!("holdout fraction must be in (0, 1), got {fraction}")));
    }
    let n_hold = ((n as f64 * fraction + 1e-9).floor() as usize).max(1);
    if n_hold >= n {
        return Err(Error::Usage(format!("{n} samples are too few to hold out {fraction}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(seed, rng::STREAM_SPLIT));
    let held = perm.split_off(n - n_hold);
    Ok((perm, held))
}

/// Batches for one epoch: a seeded permutation of `indices` (keyed by seed and
/// epoch) cut into chunks of `batch_size`; the last chunk may be short.
pub fn batch_indices(indices: &[usize], batch_size: usize, epoch: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Usage("batch size must be at least 1".into()));
    }
    if indices.is_empty() {
        return Err(Error::Usage("cannot batch an empty split".into()));
    }
    let mut order = indices.to_vec();
    order.shuffle(&mut rng::stream(seed, rng::STREAM_EPOCH_BASE + epoch as u64));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}
