//! Black-box ensemble membership attack.
//!
//! Three feature blocks are computed per candidate row: distances to the
//! synthetic data and to the attacker's reference population, a DOMIAS
//! density ratio, and an RMIA score from a fleet of reference diffusion
//! models. A boosted-tree meta-classifier, trained in a shadow world the
//! attacker builds from its own data, turns the features into a score.
//!
//! Attack inputs are model-space tables (one-hot, numerics in `[0, 1]`);
//! distances and densities are computed after mapping numerics to `[-1, 1]`.

mod features;
mod gbdt;
mod rmia;

use std::fs;
use std::path::Path;

use ndarray::{concatenate, Array2, Axis};
use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

pub use features::{
    distance_features, domias_scores, BandwidthRule, Kde, BANDWIDTH_FLOOR, DENSITY_FLOOR, DISTANCE_COLUMNS, K_NEAREST,
    RATIO_FLOOR,
};
pub use gbdt::{
    cross_validate, log_loss, stratified_folds, train_meta, Gbdt, GbdtParams, MetaClassifier, SearchConfig, TreeNode,
    Trial, MAX_BINS, REG_ALPHA_CHOICES, REG_LAMBDA_CHOICES,
};
pub use rmia::{
    half_assignment, log_likelihood_ratio, rmia_from_ratios, rmia_scores, train_rmia_fleet, FleetConfig, FleetModel,
    FleetTraining, Phase,
};

use crate::attack_tf::{make_grid, TfFeatureGrid};
use crate::dataset::{DataContext, EncodedTable, NumericNorm};
use crate::diffusion::{self, DiffusionModel, DiffusionSpec, TrainConfig};
use crate::error::{Error, Result};
use crate::seed;

pub const DOMIAS_COLUMN: &str = "log_domias";
pub const RMIA_COLUMN: &str = "rmia";

/// Which feature blocks feed the meta-classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ablation {
    pub distance: bool,
    pub domias: bool,
    pub rmia: bool,
}

impl Ablation {
    pub const FULL: Ablation = Ablation {
        distance: true,
        domias: true,
        rmia: true,
    };

    pub fn any(&self) -> bool {
        self.distance || self.domias || self.rmia
    }

    pub fn columns(&self) -> Vec<String> {
        let mut cols = Vec::new();
        if self.distance {
            cols.extend(DISTANCE_COLUMNS.iter().map(|c| c.to_string()));
        }
        if self.domias {
            cols.push(DOMIAS_COLUMN.into());
        }
        if self.rmia {
            cols.push(RMIA_COLUMN.into());
        }
        cols
    }

    pub fn is_subset_of(&self, other: &Ablation) -> bool {
        (!self.distance || other.distance) && (!self.domias || other.domias) && (!self.rmia || other.rmia)
    }

    /// Short label such as `"distance+rmia"`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.distance {
            parts.push("distance");
        }
        if self.domias {
            parts.push("domias");
        }
        if self.rmia {
            parts.push("rmia");
        }
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join("+")
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub use_distance: bool,
    pub use_domias: bool,
    pub use_rmia: bool,
    pub rmia_fleet: FleetConfig,
    pub rmia_gamma: f64,
    pub kde_bandwidth_rule: BandwidthRule,
    /// Members and non-members in the meta-classifier training set.
    pub meta_train_budget: (usize, usize),
    pub cv_folds: usize,
    pub hp_trials: usize,
    pub n_trees: usize,
    /// Rows used to train the target shadow model.
    pub shadow_train_size: usize,
    /// Synthetic rows sampled from the target shadow; defaults to the
    /// shadow's training size.
    pub shadow_synth_size: Option<usize>,
    pub shadow_spec: DiffusionSpec,
    pub shadow_train: TrainConfig,
    /// Fine-tuning steps for pretrained fleet bases; half the shadow steps
    /// when unset.
    pub finetune_steps: Option<u64>,
    /// Rows reserved for pretraining fleet bases; defaults to the shadow
    /// training size.
    pub pretrain_size: Option<usize>,
    pub population_size: usize,
    pub grid_size: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            use_distance: true,
            use_domias: true,
            use_rmia: true,
            rmia_fleet: FleetConfig::default(),
            rmia_gamma: 1.0,
            kde_bandwidth_rule: BandwidthRule::Scott,
            meta_train_budget: (10_000, 10_000),
            cv_folds: 5,
            hp_trials: 30,
            n_trees: 200,
            shadow_train_size: 20_000,
            shadow_synth_size: None,
            shadow_spec: DiffusionSpec::default(),
            shadow_train: TrainConfig::default(),
            finetune_steps: None,
            pretrain_size: None,
            population_size: 256,
            grid_size: crate::attack_tf::DEFAULT_GRID_SIZE,
        }
    }
}

impl EnsembleConfig {
    pub fn ablation(&self) -> Ablation {
        Ablation {
            distance: self.use_distance,
            domias: self.use_domias,
            rmia: self.use_rmia,
        }
    }

    pub fn with_ablation(mut self, a: Ablation) -> Self {
        self.use_distance = a.distance;
        self.use_domias = a.domias;
        self.use_rmia = a.rmia;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.ablation().any() {
            return Err(Error::Config("at least one ensemble feature block must be enabled".into()));
        }
        if self.use_rmia && self.rmia_fleet.total() == 0 {
            return Err(Error::Config("RMIA fleet is empty".into()));
        }
        if !(self.rmia_gamma > 0.0) {
            return Err(Error::Config("rmia_gamma must be positive".into()));
        }
        if self.shadow_train_size == 0 || self.meta_train_budget.0 == 0 || self.meta_train_budget.1 == 0 {
            return Err(Error::Config("shadow and meta-training sizes must be positive".into()));
        }
        if self.use_rmia && self.population_size == 0 {
            return Err(Error::Config("RMIA population size must be positive".into()));
        }
        self.shadow_train.validate()
    }

    fn fleet_recipe(&self) -> FleetTraining {
        FleetTraining {
            spec: self.shadow_spec.clone(),
            train: self.shadow_train.clone(),
            finetune_steps: self.finetune_steps.unwrap_or(self.shadow_train.steps / 2),
        }
    }

    fn needs_pretrain(&self) -> bool {
        self.use_rmia && self.rmia_fleet.n_finetuned() > 0
    }
}

/// Named per-candidate feature columns.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleFeatures {
    pub columns: Vec<String>,
    pub matrix: Array2<f64>,
    pub labels: Option<Vec<bool>>,
}

impl EnsembleFeatures {
    /// The columns of the blocks enabled in `flags`.
    pub fn select(&self, flags: &Ablation) -> Result<EnsembleFeatures> {
        let idx: Vec<usize> = flags
            .columns()
            .iter()
            .map(|c| {
                self.columns
                    .iter()
                    .position(|x| x == c)
                    .ok_or_else(|| Error::Config(format!("feature column {c} was not computed")))
            })
            .collect::<Result<_>>()?;
        Ok(EnsembleFeatures {
            columns: flags.columns(),
            matrix: self.matrix.select(Axis(1), &idx),
            labels: self.labels.clone(),
        })
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = self.columns.clone();
        if self.labels.is_some() {
            header.push("label".into());
        }
        w.write_record(&header)?;
        for (i, row) in self.matrix.rows().into_iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            if let Some(l) = &self.labels {
                rec.push(u8::from(l[i]).to_string());
            }
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }
}

/// Model-space rows re-expressed with numerics in `[-1, 1]`.
fn to_metric_space(t: &EncodedTable) -> Result<EncodedTable> {
    if t.norm != NumericNorm::MinMax01 {
        return Err(Error::Encoding("ensemble inputs must be model-space encoded".into()));
    }
    let mut m = t.matrix.clone();
    for (c, block) in t.schema.columns.iter().zip(&t.blocks) {
        if c.is_numerical() {
            m.column_mut(block.start).mapv_inplace(|v| 2.0 * v - 1.0);
        }
    }
    let ctx = DataContext {
        norm: NumericNorm::MinMaxPm1,
        ..t.context()
    };
    EncodedTable::with_matrix(&ctx, m)
}

struct FeatureInputs<'a> {
    synthetic: &'a EncodedTable,
    reference: &'a EncodedTable,
    proxy: Option<&'a DiffusionModel>,
}

/// The attacker's simulation of the audit: a target shadow, its synthetic
/// output, the RMIA fleet, and labeled meta-training features.
#[derive(Clone, Debug)]
pub struct ShadowWorld {
    pub config: EnsembleConfig,
    pub seed: u64,
    pub grid: Option<TfFeatureGrid>,
    pub fleet: Vec<FleetModel>,
    pub attacker: EncodedTable,
    pub population: EncodedTable,
    pub meta_features: EnsembleFeatures,
}

impl ShadowWorld {
    /// Builds the shadow world from model-space attacker rows.
    pub fn prepare(attacker: &EncodedTable, cfg: &EnsembleConfig, seed_value: u64) -> Result<Self> {
        cfg.validate()?;
        let n = attacker.n_rows();
        let s = cfg.shadow_train_size;
        let n_member = cfg.meta_train_budget.0.min(s);
        let n_nonmember = cfg.meta_train_budget.1;
        let pretrain = if cfg.needs_pretrain() { cfg.pretrain_size.unwrap_or(s) } else { 0 };
        let need = s + n_nonmember + pretrain;
        if n < need {
            return Err(Error::Split(format!(
                "ensemble attack needs {need} attacker rows, {n} available (short by {})",
                need - n
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::derived_rng(seed_value, "ens/split", 0));
        let shadow_rows = &order[..s];
        let nonmembers = &order[s..s + n_nonmember];
        let pretrain_rows = &order[s + n_nonmember..need];
        // candidates are never part of the reference they are compared with
        let reference_rows: Vec<usize> = order[s + n_nonmember..].to_vec();
        let shadow_train = attacker.select_rows(shadow_rows);
        let reference = attacker.select_rows(&reference_rows);

        let shadow_cfg = TrainConfig {
            seed: seed::derive(seed_value, "ens/shadow-train", 0),
            ..cfg.shadow_train.clone()
        };
        let shadow = diffusion::train(&shadow_train, &cfg.shadow_spec, &shadow_cfg)?;
        let synth_n = cfg.shadow_synth_size.unwrap_or(s);
        let shadow_synthetic = diffusion::sample(&shadow, synth_n, seed::derive(seed_value, "ens/shadow-synth", 0))?;

        let (grid, fleet, proxy, population) = if cfg.use_rmia {
            let grid = make_grid(cfg.shadow_spec.timesteps, attacker.dim(), cfg.grid_size, seed::derive(seed_value, "ens/grid", 0))?;
            let pre = (pretrain > 0).then(|| attacker.select_rows(pretrain_rows));
            let fleet = train_rmia_fleet(&shadow_train, pre.as_ref(), &cfg.rmia_fleet, &cfg.fleet_recipe(), seed::derive(seed_value, "ens/fleet", 0))?;
            let proxy = train_proxy(&shadow_synthetic, cfg, seed::derive(seed_value, "ens/shadow-proxy", 0))?;
            let k = cfg.population_size.min(reference.n_rows());
            let mut pick = index::sample(&mut seed::derived_rng(seed_value, "ens/population", 0), reference.n_rows(), k).into_vec();
            pick.sort_unstable();
            (Some(grid), fleet, Some(proxy), reference.select_rows(&pick))
        } else {
            (None, Vec::new(), None, reference.select_rows(&[]))
        };

        let mut world = ShadowWorld {
            config: cfg.clone(),
            seed: seed_value,
            grid,
            fleet,
            attacker: attacker.clone(),
            population,
            meta_features: EnsembleFeatures {
                columns: Vec::new(),
                matrix: Array2::zeros((0, 0)),
                labels: None,
            },
        };
        let candidate_rows: Vec<usize> = shadow_rows[..n_member].iter().chain(nonmembers).copied().collect();
        let labels: Vec<bool> = (0..candidate_rows.len()).map(|i| i < n_member).collect();
        let mut f = world.features(
            &attacker.select_rows(&candidate_rows),
            FeatureInputs {
                synthetic: &shadow_synthetic,
                reference: &reference,
                proxy: proxy.as_ref(),
            },
        )?;
        f.labels = Some(labels);
        world.meta_features = f;
        Ok(world)
    }

    pub fn ablation(&self) -> Ablation {
        self.config.ablation()
    }

    fn features(&self, candidates: &EncodedTable, inputs: FeatureInputs<'_>) -> Result<EnsembleFeatures> {
        let flags = self.ablation();
        let mut blocks: Vec<Array2<f64>> = Vec::new();
        if flags.distance || flags.domias {
            let c = to_metric_space(candidates)?;
            let syn = to_metric_space(inputs.synthetic)?;
            let reference = to_metric_space(inputs.reference)?;
            if flags.distance {
                blocks.push(distance_features(&c, &syn, &reference)?);
            }
            if flags.domias {
                let d = domias_scores(&c, &syn, &reference, self.config.kde_bandwidth_rule)?;
                blocks.push(Array2::from_shape_vec((d.len(), 1), d).expect("one column"));
            }
        }
        if flags.rmia {
            let grid = self.grid.as_ref().expect("grid exists when RMIA is enabled");
            let proxy = inputs.proxy.expect("proxy exists when RMIA is enabled");
            let fleet: Vec<DiffusionModel> = self.fleet.iter().map(|m| m.model.clone()).collect();
            let r = rmia_scores(candidates, proxy, &fleet, &self.population, grid, self.config.rmia_gamma)?;
            blocks.push(Array2::from_shape_vec((r.len(), 1), r).expect("one column"));
        }
        let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
        Ok(EnsembleFeatures {
            columns: flags.columns(),
            matrix: concatenate(Axis(1), &views).map_err(|e| Error::Config(e.to_string()))?,
            labels: None,
        })
    }

    /// Features of the challenge rows against the target's synthetic data.
    /// A proxy is trained on `target_synthetic` when RMIA is enabled.
    pub fn challenge_features(&self, target_synthetic: &EncodedTable, challenge: &EncodedTable, target_index: u64) -> Result<EnsembleFeatures> {
        let proxy = if self.config.use_rmia {
            Some(train_proxy(target_synthetic, &self.config, seed::derive(self.seed, "ens/target-proxy", target_index))?)
        } else {
            None
        };
        self.features(
            challenge,
            FeatureInputs {
                synthetic: target_synthetic,
                reference: &self.attacker,
                proxy: proxy.as_ref(),
            },
        )
    }

    /// Meta-classifier over the blocks in `flags`, which must have been
    /// computed.
    pub fn fit_meta(&self, flags: &Ablation) -> Result<MetaClassifier> {
        if !flags.any() {
            return Err(Error::Config("at least one ensemble feature block must be enabled".into()));
        }
        let f = self.meta_features.select(flags)?;
        let search = SearchConfig {
            cv_folds: self.config.cv_folds,
            hp_trials: self.config.hp_trials,
            n_trees: self.config.n_trees,
        };
        train_meta(&f.matrix, f.labels.as_deref().expect("meta features are labeled"), &search, seed::derive(self.seed, "ens/meta", 0))
    }
}

fn train_proxy(synthetic: &EncodedTable, cfg: &EnsembleConfig, seed_value: u64) -> Result<DiffusionModel> {
    let train_cfg = TrainConfig {
        seed: seed_value,
        ..cfg.shadow_train.clone()
    };
    diffusion::train(synthetic, &cfg.shadow_spec, &train_cfg)
}

/// Scores from a meta-classifier: membership log-odds.
pub fn score_features(meta: &MetaClassifier, features: &EnsembleFeatures, flags: &Ablation) -> Result<Vec<f64>> {
    let f = features.select(flags)?;
    meta.model.predict_margin(f.matrix.view())
}

/// A fitted ensemble attack.
#[derive(Clone, Debug)]
pub struct EnsembleAttack {
    pub world: ShadowWorld,
    pub meta: MetaClassifier,
}

impl EnsembleAttack {
    pub fn fit(attacker: &EncodedTable, cfg: &EnsembleConfig, seed_value: u64) -> Result<Self> {
        let world = ShadowWorld::prepare(attacker, cfg, seed_value)?;
        let meta = world.fit_meta(&cfg.ablation())?;
        Ok(Self { world, meta })
    }

    pub fn score(&self, target_synthetic: &EncodedTable, challenge: &EncodedTable, target_index: u64) -> Result<Vec<f64>> {
        let f = self.world.challenge_features(target_synthetic, challenge, target_index)?;
        score_features(&self.meta, &f, &self.world.ablation())
    }
}

/// Fits the attack on `attacker` and scores `challenge` against
/// `target_synthetic`. All tables are model-space encoded.
pub fn ensemble_attack(
    target_synthetic: &EncodedTable,
    challenge: &EncodedTable,
    attacker: &EncodedTable,
    cfg: &EnsembleConfig,
    seed_value: u64,
) -> Result<Vec<f64>> {
    EnsembleAttack::fit(attacker, cfg, seed_value)?.score(target_synthetic, challenge, 0)
}
