use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub n_targets: usize,
    pub train_size: usize,
    pub holdout_size: usize,
    pub challenge_size: usize,
    /// Share of rows placed in the target pool; the rest form the holdout pool.
    pub target_pool_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            n_targets: 1,
            train_size: 100,
            holdout_size: 100,
            challenge_size: 20,
            target_pool_fraction: 0.5,
        }
    }
}

/// Row indices for one target model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSplit {
    pub train: Vec<usize>,
    pub holdout: Vec<usize>,
    pub challenge: Vec<usize>,
    pub challenge_labels: Vec<bool>,
}

/// Seeded partition of a table into the target pool and the holdout pool,
/// with per-target training, holdout and challenge draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub master_seed: u64,
    pub config: SplitConfig,
    pub target_pool: Vec<usize>,
    pub holdout_pool: Vec<usize>,
    pub targets: Vec<TargetSplit>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowRole {
    TargetPool,
    HoldoutPool,
}

pub fn make_splits(n_rows: usize, config: &SplitConfig, master_seed: u64) -> Result<SplitPlan> {
    if !(0.0..=1.0).contains(&config.target_pool_fraction) {
        return Err(Error::Config("target_pool_fraction must be in [0, 1]".into()));
    }
    let n_members = config.challenge_size / 2;
    let n_nonmembers = config.challenge_size - n_members;
    let shortfall = |what: &str, need: usize, have: usize| {
        Error::Split(format!(
            "{what} needs {need} rows but only {have} are available (short by {})",
            need - have
        ))
    };
    if config.train_size > n_rows {
        return Err(shortfall("train_size", config.train_size, n_rows));
    }
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.shuffle(&mut seed::derived_rng(master_seed, "split/pools", 0));
    let n_pool = (config.target_pool_fraction * n_rows as f64).round() as usize;
    let mut target_pool = order[..n_pool].to_vec();
    let mut holdout_pool = order[n_pool..].to_vec();
    target_pool.sort_unstable();
    holdout_pool.sort_unstable();

    if config.train_size > target_pool.len() {
        return Err(shortfall("train_size (target pool)", config.train_size, target_pool.len()));
    }
    if config.holdout_size > holdout_pool.len() {
        return Err(shortfall("holdout_size", config.holdout_size, holdout_pool.len()));
    }
    if n_members > config.train_size {
        return Err(shortfall("challenge members", n_members, config.train_size));
    }
    if n_nonmembers > config.holdout_size {
        return Err(shortfall("challenge non-members", n_nonmembers, config.holdout_size));
    }

    let targets = (0..config.n_targets)
        .map(|i| {
            let mut rng = seed::derived_rng(master_seed, "split/target", i as u64);
            let train = sample(&target_pool, config.train_size, &mut rng);
            let holdout = sample(&holdout_pool, config.holdout_size, &mut rng);
            let members = sample(&train, n_members, &mut rng);
            let nonmembers = sample(&holdout, n_nonmembers, &mut rng);
            let mut challenge: Vec<(usize, bool)> = members
                .into_iter()
                .map(|r| (r, true))
                .chain(nonmembers.into_iter().map(|r| (r, false)))
                .collect();
            challenge.shuffle(&mut rng);
            TargetSplit {
                train,
                holdout,
                challenge: challenge.iter().map(|c| c.0).collect(),
                challenge_labels: challenge.iter().map(|c| c.1).collect(),
            }
        })
        .collect();
    Ok(SplitPlan {
        master_seed,
        config: config.clone(),
        target_pool,
        holdout_pool,
        targets,
    })
}

/// Draw without replacement; result sorted for stable downstream order.
fn sample(pool: &[usize], k: usize, rng: &mut seed::Rng) -> Vec<usize> {
    let mut picked: Vec<usize> = pool.choose_multiple(rng, k).copied().collect();
    picked.sort_unstable();
    picked
}

impl SplitPlan {
    pub fn role(&self, row: usize) -> Option<RowRole> {
        if self.target_pool.binary_search(&row).is_ok() {
            Some(RowRole::TargetPool)
        } else if self.holdout_pool.binary_search(&row).is_ok() {
            Some(RowRole::HoldoutPool)
        } else {
            None
        }
    }

    /// Holdout pool minus every challenge non-member, i.e. the rows handed to
    /// the attacker as reference data.
    pub fn attacker_pool(&self) -> Vec<usize> {
        let mut excluded: Vec<usize> = self
            .targets
            .iter()
            .flat_map(|t| {
                t.challenge
                    .iter()
                    .zip(&t.challenge_labels)
                    .filter(|(_, &m)| !m)
                    .map(|(&r, _)| r)
            })
            .collect();
        excluded.sort_unstable();
        excluded.dedup();
        self.holdout_pool
            .iter()
            .copied()
            .filter(|r| excluded.binary_search(r).is_err())
            .collect()
    }
}
