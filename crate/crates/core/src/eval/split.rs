use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_CONTENTS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub repeats: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            repeats: 50,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub config: SplitConfig,
    pub splits: Vec<Split>,
}

impl SplitPlan {
    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }
}

/// Content-disjoint train/test partitions. Content ids are deduplicated and
/// sorted first, so the plan depends only on the id set and the seed.
pub fn make_splits(content_ids: &[String], cfg: &SplitConfig) -> Result<SplitPlan> {
    let ids: Vec<String> = content_ids
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if ids.len() < MIN_CONTENTS {
        return Err(Error::InsufficientSamples {
            needed: MIN_CONTENTS,
            got: ids.len(),
        });
    }
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction must be in (0, 1), got {}",
            cfg.train_fraction
        )));
    }
    if cfg.repeats == 0 {
        return Err(Error::InvalidConfig(
            "at least one repeat is required".into(),
        ));
    }
    let n_train =
        ((cfg.train_fraction * ids.len() as f64).round() as usize).clamp(1, ids.len() - 1);

    let splits = (0..cfg.repeats)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, r as u64));
            let mut shuffled = ids.clone();
            shuffled.shuffle(&mut rng);
            let mut train = shuffled[..n_train].to_vec();
            let mut test = shuffled[n_train..].to_vec();
            train.sort();
            test.sort();
            Split { train, test }
        })
        .collect();
    Ok(SplitPlan {
        config: *cfg,
        splits,
    })
}

/// Independent 64-bit seed for item `index` of a run seeded with `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index.wrapping_add(1));
    rng.next_u64()
}
