use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::toy::ToySpec;
use crate::attack_tf::{AttackMode, ClassifierConfig, TfAttackConfig, DEFAULT_GRID_SIZE};
use crate::dataset::SplitConfig;
use crate::diffusion::{DiffusionSpec, TrainConfig};
use crate::ensemble::{Ablation, EnsembleConfig, FleetConfig};
use crate::error::{Error, Result};
use crate::heuristics::DEFAULT_HR_THRESHOLD_PCT;
use crate::nn::AdamParams;
use crate::quality::QualityConfig;
use crate::scenarios::{MismatchKind, MismatchSpec};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    /// CSV file plus a JSON schema description.
    Csv { path: PathBuf, schema: PathBuf },
    /// A named toy preset: `berka_like` or `diabetes_like`.
    Preset { name: String, n_rows: usize, seed: u64 },
    Toy { spec: ToySpec, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    TrainSteps,
    TrainSize,
    ModelVariant,
    DiffusionSteps,
    BatchSize,
    SynthMultiple,
    NShadows,
    ShadowMismatch,
    DataMismatch,
    EnsembleAblation,
    RmiaFleet,
}

impl SweepAxis {
    pub fn name(&self) -> String {
        serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    TfWhite,
    TfBlack,
    Ensemble,
}

impl AttackKind {
    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::TfWhite => "tf_white",
            AttackKind::TfBlack => "tf_black",
            AttackKind::Ensemble => "ensemble",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Heuristics,
    Quality,
    Divergence,
}

pub const MODEL_VARIANTS: [&str; 6] = [
    "narrow_shallow_short",
    "narrow_shallow",
    "narrow",
    "default",
    "wide_deep",
    "wide_deep_long",
];

pub const SHADOW_MISMATCHES: [&str; 7] = ["matched", "short", "long", "least", "less", "small", "large"];

const SMALL_DIMS: [usize; 4] = [256, 512, 512, 256];
const NARROW_DIMS: [usize; 6] = [256, 512, 512, 512, 512, 256];
const LARGE_DIMS: [usize; 8] = [1024, 2048, 2048, 2048, 2048, 2048, 2048, 1024];

/// Settings every cell starts from before the sweep axis is applied.
/// Defaults are the full-scale Berka-like values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Defaults {
    pub timesteps: usize,
    pub hidden_dims: Vec<usize>,
    pub time_embed_dim: usize,
    pub train_steps: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub train_size: usize,
    pub synth_multiple: f64,
    pub n_targets: usize,
    pub challenge_size: usize,
    pub holdout_size: usize,
    pub target_pool_fraction: f64,
    pub n_shadows: usize,
    pub shadow_train_size: usize,
    pub shadow_budget: Option<usize>,
    pub n_proxies: usize,
    pub tf_grid_size: usize,
    pub classifier: ClassifierConfig,
    pub ensemble: EnsembleConfig,
    pub hr_threshold_pct: f64,
    pub quality: QualityConfig,
    pub divergence_alpha: f64,
    pub divergence_permutations: usize,
}

impl Default for Defaults {
    fn default() -> Self {
        Self::berka()
    }
}

impl Defaults {
    pub fn berka() -> Self {
        Self {
            timesteps: 2000,
            hidden_dims: vec![512, 1024, 1024, 1024, 1024, 512],
            time_embed_dim: 128,
            train_steps: 200_000,
            batch_size: 4096,
            learning_rate: 1e-3,
            train_size: 20_000,
            synth_multiple: 1.0,
            n_targets: 10,
            challenge_size: 200,
            holdout_size: 20_000,
            target_pool_fraction: 0.5,
            n_shadows: 20,
            shadow_train_size: 20_000,
            shadow_budget: None,
            n_proxies: 1,
            tf_grid_size: DEFAULT_GRID_SIZE,
            classifier: ClassifierConfig::default(),
            ensemble: EnsembleConfig {
                meta_train_budget: (10_000, 10_000),
                ..EnsembleConfig::default()
            },
            hr_threshold_pct: DEFAULT_HR_THRESHOLD_PCT,
            quality: QualityConfig::default(),
            divergence_alpha: 0.05,
            divergence_permutations: 1000,
        }
    }

    pub fn diabetes() -> Self {
        let mut d = Self::berka();
        d.train_size = 10_000;
        d.n_targets = 3;
        d.challenge_size = 1000;
        d.holdout_size = 10_000;
        d.n_shadows = 7;
        d.shadow_train_size = 10_000;
        d.ensemble.meta_train_budget = (5_000, 5_000);
        d
    }

    /// Divides steps, data sizes and layer widths by `divisor`. Timesteps,
    /// counts of models and challenge sizes are left alone.
    pub fn desk_scaled(&self, divisor: f64) -> Result<Self> {
        if !(divisor >= 1.0) {
            return Err(Error::Config(format!("desk_scale {divisor} must be at least 1")));
        }
        let size = |n: usize| ((n as f64 / divisor).round() as usize).max(1);
        let steps = |n: u64| ((n as f64 / divisor).round() as u64).max(1);
        let mut d = self.clone();
        d.hidden_dims = d.hidden_dims.iter().map(|&w| size(w)).collect();
        d.time_embed_dim = size(d.time_embed_dim);
        d.train_steps = steps(d.train_steps);
        d.batch_size = size(d.batch_size);
        d.train_size = size(d.train_size);
        d.holdout_size = size(d.holdout_size);
        d.shadow_train_size = size(d.shadow_train_size);
        d.shadow_budget = d.shadow_budget.map(size);
        d.classifier.steps = steps(d.classifier.steps);
        d.classifier.batch_size = size(d.classifier.batch_size);
        d.classifier.hidden_dims = d.classifier.hidden_dims.iter().map(|&w| size(w)).collect();
        d.ensemble.meta_train_budget = (size(d.ensemble.meta_train_budget.0), size(d.ensemble.meta_train_budget.1));
        d.ensemble.pretrain_size = d.ensemble.pretrain_size.map(size);
        Ok(d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub dataset: DatasetSource,
    pub axis: SweepAxis,
    pub values: Vec<Value>,
    #[serde(default)]
    pub defaults: Defaults,
    #[serde(default)]
    pub desk_scale: Option<f64>,
    #[serde(default)]
    pub attacks: Vec<AttackKind>,
    #[serde(default)]
    pub metrics: Vec<MetricKind>,
    #[serde(default)]
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep axis needs at least one value".into()));
        }
        let base = self.effective_defaults()?;
        for v in &self.values {
            CellSettings::resolve(&base, self.axis, v, self.desk_scale.unwrap_or(1.0), self.master_seed)?;
        }
        Ok(())
    }

    pub fn effective_defaults(&self) -> Result<Defaults> {
        match self.desk_scale {
            Some(s) => self.defaults.desk_scaled(s),
            None => Ok(self.defaults.clone()),
        }
    }

    /// Stable hash of the canonical JSON form.
    pub fn hash(&self) -> String {
        seed::hex_digest(&serde_json::to_vec(self).expect("config serializes"))
    }
}

/// Display label of an axis value.
pub fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Architecture and step count of a named model variant. Step counts are
/// relative to the default 200k-step schedule.
pub fn model_variant(name: &str, base_dims: &[usize], base_steps: u64, divisor: f64) -> Result<(Vec<usize>, u64)> {
    let scale = |dims: &[usize]| dims.iter().map(|&w| ((w as f64 / divisor).round() as usize).max(1)).collect::<Vec<_>>();
    let steps = |factor: f64| ((base_steps as f64 * factor).round() as u64).max(1);
    Ok(match name {
        "narrow_shallow_short" => (scale(&SMALL_DIMS), steps(0.5)),
        "narrow_shallow" => (scale(&SMALL_DIMS), base_steps),
        "narrow" => (scale(&NARROW_DIMS), base_steps),
        "default" => (base_dims.to_vec(), base_steps),
        "wide_deep" => (scale(&LARGE_DIMS), base_steps),
        "wide_deep_long" => (scale(&LARGE_DIMS), steps(1.5)),
        other => return Err(Error::Config(format!("unknown model variant {other:?}"))),
    })
}

/// Fully resolved settings of one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSettings {
    pub split: SplitConfig,
    pub target_spec: DiffusionSpec,
    pub target_train: TrainConfig,
    pub synth_size: usize,
    pub tf: TfAttackConfig,
    pub ensemble: EnsembleConfig,
    pub data_mismatch: Option<MismatchSpec>,
    pub hr_threshold_pct: f64,
    pub quality: QualityConfig,
    pub divergence_alpha: f64,
    pub divergence_permutations: usize,
}

fn as_u64(axis: SweepAxis, v: &Value) -> Result<u64> {
    v.as_u64()
        .ok_or_else(|| Error::Config(format!("{} values must be non-negative integers, got {v}", axis.name())))
}

fn as_name(axis: SweepAxis, v: &Value) -> Result<String> {
    v.as_str()
        .map(str::to_string)
        .ok_or_else(|| Error::Config(format!("{} values must be strings, got {v}", axis.name())))
}

fn parse_ablation(v: &Value) -> Result<Ablation> {
    if let Ok(a) = serde_json::from_value::<Ablation>(v.clone()) {
        return Ok(a);
    }
    let s = v
        .as_str()
        .ok_or_else(|| Error::Config(format!("ensemble_ablation value {v} not understood")))?;
    if s == "full" {
        return Ok(Ablation::FULL);
    }
    let mut a = Ablation {
        distance: false,
        domias: false,
        rmia: false,
    };
    for part in s.split('+') {
        match part {
            "distance" => a.distance = true,
            "domias" => a.domias = true,
            "rmia" => a.rmia = true,
            other => return Err(Error::Config(format!("unknown ensemble block {other:?}"))),
        }
    }
    Ok(a)
}

fn parse_fleet(v: &Value) -> Result<FleetConfig> {
    if let Ok(f) = serde_json::from_value::<FleetConfig>(v.clone()) {
        return Ok(f);
    }
    let s = v
        .as_str()
        .ok_or_else(|| Error::Config(format!("rmia_fleet value {v} not understood")))?;
    let parts: Vec<usize> = s
        .split('+')
        .map(|p| p.parse().map_err(|_| Error::Config(format!("rmia_fleet {s:?} is not of the form a+b+c"))))
        .collect::<Result<_>>()?;
    match parts[..] {
        [a, b, c] => Ok(FleetConfig {
            n_single_phase: a,
            pretrain_bases: b,
            finetuned_per_base: c,
        }),
        _ => Err(Error::Config(format!("rmia_fleet {s:?} is not of the form a+b+c"))),
    }
}

fn parse_mismatch(v: &Value, master_seed: u64) -> Result<Option<MismatchSpec>> {
    if let Some(s) = v.as_str() {
        if s == "none" || s == "matched" {
            return Ok(None);
        }
        let kind: MismatchKind = serde_json::from_value(Value::String(s.into()))
            .map_err(|_| Error::Config(format!("unknown data mismatch {s:?}")))?;
        return Ok(Some(MismatchSpec::new(kind, seed::derive(master_seed, "harness/mismatch", 0))));
    }
    serde_json::from_value(v.clone())
        .map(Some)
        .map_err(|e| Error::Config(format!("data mismatch {v}: {e}")))
}

impl CellSettings {
    /// Applies one axis value to the (already desk-scaled) defaults. The
    /// attacker mirrors the target recipe unless the axis is a shadow
    /// mismatch.
    pub fn resolve(d: &Defaults, axis: SweepAxis, value: &Value, divisor: f64, master_seed: u64) -> Result<Self> {
        let mut spec = DiffusionSpec {
            timesteps: d.timesteps,
            hidden_dims: d.hidden_dims.clone(),
            time_embed_dim: d.time_embed_dim,
        };
        let mut train = TrainConfig {
            steps: d.train_steps,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            seed: 0,
            adam: AdamParams::default(),
        };
        let mut train_size = d.train_size;
        let mut shadow_train_size = d.shadow_train_size;
        let mut synth_multiple = d.synth_multiple;
        let mut n_shadows = d.n_shadows;
        let mut ensemble = d.ensemble.clone();
        let mut data_mismatch = None;
        let mut shadow_mismatch = None;
        match axis {
            SweepAxis::TrainSteps => train.steps = as_u64(axis, value)?,
            SweepAxis::TrainSize => {
                train_size = as_u64(axis, value)? as usize;
                shadow_train_size = train_size;
            }
            SweepAxis::ModelVariant => {
                let (dims, steps) = model_variant(&as_name(axis, value)?, &d.hidden_dims, d.train_steps, divisor)?;
                spec.hidden_dims = dims;
                train.steps = steps;
            }
            SweepAxis::DiffusionSteps => spec.timesteps = as_u64(axis, value)? as usize,
            SweepAxis::BatchSize => train.batch_size = as_u64(axis, value)? as usize,
            SweepAxis::SynthMultiple => {
                synth_multiple = value
                    .as_f64()
                    .ok_or_else(|| Error::Config(format!("synth_multiple values must be numbers, got {value}")))?
            }
            SweepAxis::NShadows => n_shadows = as_u64(axis, value)? as usize,
            SweepAxis::ShadowMismatch => {
                let name = as_name(axis, value)?;
                if !SHADOW_MISMATCHES.contains(&name.as_str()) {
                    return Err(Error::Config(format!("unknown shadow mismatch {name:?}")));
                }
                shadow_mismatch = Some(name);
            }
            SweepAxis::DataMismatch => data_mismatch = parse_mismatch(value, master_seed)?,
            SweepAxis::EnsembleAblation => ensemble = ensemble.with_ablation(parse_ablation(value)?),
            SweepAxis::RmiaFleet => ensemble.rmia_fleet = parse_fleet(value)?,
        }
        if !(synth_multiple > 0.0) {
            return Err(Error::Config("synth_multiple must be positive".into()));
        }
        let synth_size = ((train_size as f64 * synth_multiple).round() as usize).max(1);
        let shadow_synth = ((shadow_train_size as f64 * synth_multiple).round() as usize).max(1);

        let mut shadow_spec = spec.clone();
        let mut shadow_train = train.clone();
        // shadow variants keep fixed step ratios to the 200k default
        match shadow_mismatch.as_deref() {
            Some("short") => shadow_train.steps = ((train.steps as f64 * 5_000.0 / 200_000.0).round() as u64).max(1),
            Some("long") => shadow_train.steps = ((train.steps as f64 * 1.5).round() as u64).max(1),
            Some("least") => shadow_spec.timesteps = 10,
            Some("less") => shadow_spec.timesteps = 100,
            Some("small") => shadow_spec.hidden_dims = model_variant("narrow_shallow", &[], 0, divisor)?.0,
            Some("large") => shadow_spec.hidden_dims = model_variant("wide_deep", &[], 0, divisor)?.0,
            _ => {}
        }

        let tf = TfAttackConfig {
            mode: AttackMode::WhiteBox,
            n_shadows,
            shadow_train_size,
            shadow_budget: d.shadow_budget,
            shadow_spec: shadow_spec.clone(),
            shadow_train: shadow_train.clone(),
            n_proxies: d.n_proxies,
            shadow_synth_size: Some(shadow_synth),
            grid_size: d.tf_grid_size,
            classifier: d.classifier.clone(),
        };
        tf.validate()?;
        ensemble.shadow_train_size = shadow_train_size;
        ensemble.shadow_synth_size = Some(shadow_synth);
        ensemble.shadow_spec = shadow_spec;
        ensemble.shadow_train = shadow_train;
        ensemble.validate()?;
        train.validate()?;
        if spec.timesteps < 1 {
            return Err(Error::Config("timesteps must be positive".into()));
        }
        Ok(Self {
            split: SplitConfig {
                n_targets: d.n_targets,
                train_size,
                holdout_size: d.holdout_size,
                challenge_size: d.challenge_size,
                target_pool_fraction: d.target_pool_fraction,
            },
            target_spec: spec,
            target_train: train,
            synth_size,
            tf,
            ensemble,
            data_mismatch,
            hr_threshold_pct: d.hr_threshold_pct,
            quality: d.quality.clone(),
            divergence_alpha: d.divergence_alpha,
            divergence_permutations: d.divergence_permutations,
        })
    }
}
