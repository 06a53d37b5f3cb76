use ndarray::Axis;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack_tf::{extract_features, TfFeatureGrid};
use crate::dataset::EncodedTable;
use crate::diffusion::{self, DiffusionModel, DiffusionSpec, TrainConfig};
use crate::error::{Error, Result};
use crate::seed;

/// Shape of the RMIA reference fleet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FleetConfig {
    pub n_single_phase: usize,
    pub pretrain_bases: usize,
    pub finetuned_per_base: usize,
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self {
            n_single_phase: 8,
            pretrain_bases: 2,
            finetuned_per_base: 4,
        }
    }
}

impl FleetConfig {
    pub fn total(&self) -> usize {
        self.n_single_phase + self.pretrain_bases * self.finetuned_per_base
    }

    /// `"single+bases+per_base"`, e.g. `"4+2+2"`.
    pub fn name(&self) -> String {
        format!("{}+{}+{}", self.n_single_phase, self.pretrain_bases, self.finetuned_per_base)
    }

    pub fn n_finetuned(&self) -> usize {
        self.pretrain_bases * self.finetuned_per_base
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Single,
    Finetuned { base: usize },
}

#[derive(Clone, Debug)]
pub struct FleetModel {
    pub model: DiffusionModel,
    pub phase: Phase,
    /// Rows of the target-shadow training set this model saw.
    pub members: Vec<usize>,
}

/// For each of `n_rows` points, picks a random half of `n_models` models
/// (⌊n/2⌋ or ⌈n/2⌉ of them). Returns the member rows of each model.
pub fn half_assignment(n_rows: usize, n_models: usize, seed_value: u64) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); n_models];
    if n_models == 0 {
        return members;
    }
    let mut rng = seed::derived_rng(seed_value, "rmia/assign", 0);
    for row in 0..n_rows {
        let mut k = n_models / 2;
        if n_models % 2 == 1 && rng.gen_bool(0.5) {
            k += 1;
        }
        for m in index::sample(&mut rng, n_models, k) {
            members[m].push(row);
        }
    }
    for m in &mut members {
        m.sort_unstable();
    }
    members
}

/// Recipe shared by every fleet model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FleetTraining {
    pub spec: DiffusionSpec,
    pub train: TrainConfig,
    /// Steps spent fine-tuning a pretrained base.
    pub finetune_steps: u64,
}

/// Trains the fleet. Single-phase models train on their half of
/// `shadow_train`; each base pretrains on `pretrain` and spawns fine-tuned
/// copies, which get their own half assignment over `shadow_train`.
pub fn train_rmia_fleet(
    shadow_train: &EncodedTable,
    pretrain: Option<&EncodedTable>,
    fleet: &FleetConfig,
    recipe: &FleetTraining,
    seed_value: u64,
) -> Result<Vec<FleetModel>> {
    if fleet.total() == 0 {
        return Err(Error::Config("RMIA fleet is empty".into()));
    }
    if fleet.pretrain_bases > 0 && fleet.finetuned_per_base > 0 && pretrain.map_or(true, |p| p.n_rows() == 0) {
        return Err(Error::Split("pretraining needs rows disjoint from the target-shadow training set".into()));
    }
    let single = half_assignment(shadow_train.n_rows(), fleet.n_single_phase, seed::derive(seed_value, "rmia/single", 0));
    let tuned = half_assignment(shadow_train.n_rows(), fleet.n_finetuned(), seed::derive(seed_value, "rmia/tuned", 0));
    if single.iter().chain(&tuned).any(Vec::is_empty) {
        return Err(Error::Split("an RMIA model was assigned no training rows".into()));
    }
    let bases: Vec<DiffusionModel> = match pretrain {
        Some(p) if fleet.finetuned_per_base > 0 => (0..fleet.pretrain_bases)
            .into_par_iter()
            .map(|b| {
                let cfg = TrainConfig {
                    seed: seed::derive(seed_value, "rmia/pretrain", b as u64),
                    ..recipe.train.clone()
                };
                diffusion::train(p, &recipe.spec, &cfg)
            })
            .collect::<Result<_>>()?,
        _ => Vec::new(),
    };
    let jobs: Vec<(Phase, Vec<usize>)> = single
        .into_iter()
        .map(|m| (Phase::Single, m))
        .chain(
            tuned
                .into_iter()
                .enumerate()
                .map(|(i, m)| (Phase::Finetuned { base: i / fleet.finetuned_per_base }, m)),
        )
        .collect();
    jobs.into_par_iter()
        .enumerate()
        .map(|(i, (phase, members))| {
            let rows = shadow_train.select_rows(&members);
            let model = match phase {
                Phase::Single => {
                    let cfg = TrainConfig {
                        seed: seed::derive(seed_value, "rmia/single-train", i as u64),
                        ..recipe.train.clone()
                    };
                    diffusion::train(&rows, &recipe.spec, &cfg)?
                }
                Phase::Finetuned { base } => {
                    let cfg = TrainConfig {
                        seed: seed::derive(seed_value, "rmia/finetune", i as u64),
                        steps: recipe.finetune_steps,
                        ..recipe.train.clone()
                    };
                    diffusion::continue_training(bases[base].clone(), &rows, &cfg)?
                }
            };
            Ok(FleetModel { model, phase, members })
        })
        .collect()
}

/// Mean loss over the feature grid, per row.
fn mean_grid_loss(model: &DiffusionModel, rows: &EncodedTable, grid: &TfFeatureGrid) -> Result<Vec<f64>> {
    let f = extract_features(model, rows, grid)?;
    Ok(f.mean_axis(Axis(1)).map_or_else(|| vec![0.0; rows.n_rows()], |m| m.to_vec()))
}

/// `ln L(x)` with `L(x) = exp(−ℓ_proxy(x)) / mean_m exp(−ℓ_m(x))`, the
/// fleet average taken in probability space.
pub fn log_likelihood_ratio(
    rows: &EncodedTable,
    target_proxy: &DiffusionModel,
    fleet: &[DiffusionModel],
    grid: &TfFeatureGrid,
) -> Result<Vec<f64>> {
    if fleet.is_empty() {
        return Err(Error::Config("RMIA needs at least one reference model".into()));
    }
    let own = mean_grid_loss(target_proxy, rows, grid)?;
    let refs: Vec<Vec<f64>> = fleet.iter().map(|m| mean_grid_loss(m, rows, grid)).collect::<Result<_>>()?;
    let ln_m = (fleet.len() as f64).ln();
    Ok((0..rows.n_rows())
        .map(|i| {
            let neg: Vec<f64> = refs.iter().map(|r| -r[i]).collect();
            -own[i] - (crate::stats::logsumexp(&neg) - ln_m)
        })
        .collect())
}

/// Fraction of population points `z` with `L(x)/L(z) > gamma`.
pub fn rmia_from_ratios(candidates: &[f64], population: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if population.is_empty() {
        return Err(Error::Config("RMIA population sample is empty".into()));
    }
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("RMIA gamma {gamma} must be positive")));
    }
    let ln_gamma = gamma.ln();
    let n = population.len() as f64;
    Ok(candidates
        .iter()
        .map(|&x| population.iter().filter(|&&z| x - z > ln_gamma).count() as f64 / n)
        .collect())
}

/// RMIA score of every candidate against `population`.
pub fn rmia_scores(
    candidates: &EncodedTable,
    target_proxy: &DiffusionModel,
    fleet: &[DiffusionModel],
    population: &EncodedTable,
    grid: &TfFeatureGrid,
    gamma: f64,
) -> Result<Vec<f64>> {
    if population.n_rows() == 0 {
        return Err(Error::Config("RMIA population sample is empty".into()));
    }
    let x = log_likelihood_ratio(candidates, target_proxy, fleet, grid)?;
    let z = log_likelihood_ratio(population, target_proxy, fleet, grid)?;
    rmia_from_ratios(&x, &z, gamma)
}
