//! Loss-feature membership attack with shadow models.
//!
//! A fixed grid of `K` noise vectors and a handful of small timesteps turns
//! any diffusion model into a feature extractor: row `x` maps to the
//! ε-prediction losses `‖m(x_t, t) − ε_j‖²` for every grid cell. Shadow models
//! trained on attacker data supply labeled features for a small MLP that
//! separates members from non-members. In the black-box setting the features
//! come from a proxy model trained on synthetic output instead of the model
//! itself.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::{index, SliceRandom};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{f32_blob, read_f32_blob, EncodedTable};
use crate::diffusion::{self, DiffusionModel, DiffusionSpec, TrainConfig};
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, AdamParams, Mlp};
use crate::seed;

/// Number of grid noise vectors used by the full-scale attack.
pub const DEFAULT_GRID_SIZE: usize = 300;

/// Fixed `(ε, t)` pairs shared by every model and candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfFeatureGrid {
    /// `K × d`, one noise vector per row.
    pub epsilons: Array2<f64>,
    pub timesteps: Vec<usize>,
}

impl TfFeatureGrid {
    pub fn k(&self) -> usize {
        self.epsilons.nrows()
    }

    /// `K · |timesteps|`; column `j·|timesteps| + k` holds `(ε_j, t_k)`.
    pub fn feature_dim(&self) -> usize {
        self.k() * self.timesteps.len()
    }

    pub fn data_dim(&self) -> usize {
        self.epsilons.ncols()
    }
}

/// Timesteps probed for a model with `total` diffusion steps.
pub fn grid_timesteps(total: usize) -> Vec<usize> {
    if total >= 500 {
        vec![5, 10, 20, 30, 40, 50, 100]
    } else {
        (3..=9).collect()
    }
}

pub fn make_grid(total_timesteps: usize, data_dim: usize, k: usize, seed_value: u64) -> Result<TfFeatureGrid> {
    if total_timesteps < 10 {
        return Err(Error::Config(format!(
            "the feature grid needs at least 10 diffusion timesteps, got {total_timesteps}"
        )));
    }
    if k == 0 {
        return Err(Error::Config("the feature grid needs at least one noise vector".into()));
    }
    let mut rng = seed::derived_rng(seed_value, "tf/grid", 0);
    let epsilons = Array2::from_shape_simple_fn((k, data_dim), || StandardNormal.sample(&mut rng));
    Ok(TfFeatureGrid {
        epsilons,
        timesteps: grid_timesteps(total_timesteps),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum FeatureSource {
    Target,
    Shadow(usize),
    Proxy(usize),
}

/// Loss features with membership labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub features: Array2<f64>,
    pub labels: Vec<bool>,
    pub source: FeatureSource,
}

#[derive(Serialize, Deserialize)]
struct FeatureManifest {
    format_version: u32,
    n_rows: usize,
    n_cols: usize,
    labels: Vec<bool>,
    source: FeatureSource,
}

impl FeatureMatrix {
    pub fn new(features: Array2<f64>, labels: Vec<bool>, source: FeatureSource) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Label(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::ModelCorrupt("non-finite loss feature".into()));
        }
        Ok(Self {
            features,
            labels,
            source,
        })
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = FeatureManifest {
            format_version: 1,
            n_rows: self.features.nrows(),
            n_cols: self.features.ncols(),
            labels: self.labels.clone(),
            source: self.source,
        };
        let path = dir.join(format!("{stem}.json"));
        fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
        let path = dir.join(format!("{stem}.bin"));
        fs::write(&path, f32_blob(self.features.iter().copied())).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let path = dir.join(format!("{stem}.json"));
        let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let m: FeatureManifest = serde_json::from_slice(&text)?;
        let path = dir.join(format!("{stem}.bin"));
        let blob = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let values = read_f32_blob(&blob, m.n_rows * m.n_cols)?;
        let features = Array2::from_shape_vec((m.n_rows, m.n_cols), values)
            .map_err(|e| Error::Encoding(e.to_string()))?;
        Self::new(features, m.labels, m.source)
    }
}

/// Loss features of every row under `model`.
pub fn extract_features(model: &DiffusionModel, rows: &EncodedTable, grid: &TfFeatureGrid) -> Result<Array2<f64>> {
    model.check_rows(rows)?;
    if grid.data_dim() != model.data_dim() {
        return Err(Error::Dimension {
            expected: model.data_dim(),
            got: grid.data_dim(),
        });
    }
    model.loss_grid(rows.matrix.view(), grid.epsilons.view(), &grid.timesteps)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    WhiteBox,
    BlackBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub hidden_dims: Vec<usize>,
    pub learning_rate: f64,
    pub steps: u64,
    pub batch_size: usize,
    /// Z-score features with training statistics before the network.
    pub standardize: bool,
    pub adam: AdamParams,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![200, 200],
            learning_rate: 1e-4,
            steps: 5000,
            batch_size: 6000,
            standardize: false,
            adam: AdamParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TfAttackConfig {
    pub mode: AttackMode,
    pub n_shadows: usize,
    /// Rows each shadow model trains on, drawn from attacker data.
    pub shadow_train_size: usize,
    /// Members (and as many non-members) labeled per shadow; `None` means
    /// `min(3000, shadow_train_size / 2)`.
    pub shadow_budget: Option<usize>,
    pub shadow_spec: DiffusionSpec,
    pub shadow_train: TrainConfig,
    /// Proxies trained per synthetic set in black-box mode.
    pub n_proxies: usize,
    /// Synthetic rows drawn from each shadow in black-box mode; `None`
    /// uses the shadow training size.
    pub shadow_synth_size: Option<usize>,
    pub grid_size: usize,
    pub classifier: ClassifierConfig,
}

impl Default for TfAttackConfig {
    fn default() -> Self {
        Self {
            mode: AttackMode::WhiteBox,
            n_shadows: 20,
            shadow_train_size: 20_000,
            shadow_budget: None,
            shadow_spec: DiffusionSpec::default(),
            shadow_train: TrainConfig::default(),
            n_proxies: 1,
            shadow_synth_size: None,
            grid_size: DEFAULT_GRID_SIZE,
            classifier: ClassifierConfig::default(),
        }
    }
}

impl TfAttackConfig {
    pub fn budget(&self) -> usize {
        self.shadow_budget
            .unwrap_or_else(|| (self.shadow_train_size / 2).min(3000))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_shadows < 1 {
            return Err(Error::Config("n_shadows must be at least 1".into()));
        }
        if self.n_proxies < 1 {
            return Err(Error::Config("n_proxies must be at least 1".into()));
        }
        if self.shadow_train_size < 1 || self.budget() < 1 {
            return Err(Error::Config("shadow training size and budget must be positive".into()));
        }
        if self.budget() > self.shadow_train_size {
            return Err(Error::Config(format!(
                "shadow budget {} exceeds shadow training size {}",
                self.budget(),
                self.shadow_train_size
            )));
        }
        self.shadow_train.validate()
    }
}

/// A trained shadow model and the attacker rows it was labeled on.
#[derive(Clone, Debug)]
pub struct Shadow {
    pub model: DiffusionModel,
    /// Indices into the attacker table.
    pub train_rows: Vec<usize>,
    pub members: Vec<usize>,
    pub nonmembers: Vec<usize>,
}

/// Trains `cfg.n_shadows` shadow models on attacker rows. Each shadow draws
/// its own training set without replacement; labeled members come from that
/// set and non-members from the remaining attacker rows.
pub fn train_shadows(attacker: &EncodedTable, cfg: &TfAttackConfig, seed_value: u64) -> Result<Vec<Shadow>> {
    cfg.validate()?;
    let n = attacker.n_rows();
    let need = cfg.shadow_train_size + cfg.budget();
    if n < need {
        return Err(Error::Split(format!(
            "shadow models need {need} attacker rows, {n} available (short by {})",
            need - n
        )));
    }
    (0..cfg.n_shadows)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::derived_rng(seed_value, "tf/shadow-split", i as u64);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let train_rows = order[..cfg.shadow_train_size].to_vec();
            let members = train_rows[..cfg.budget()].to_vec();
            let nonmembers = order[cfg.shadow_train_size..need].to_vec();
            let train_cfg = TrainConfig {
                seed: seed::derive(seed_value, "tf/shadow-train", i as u64),
                ..cfg.shadow_train.clone()
            };
            let model = diffusion::train(&attacker.select_rows(&train_rows), &cfg.shadow_spec, &train_cfg)?;
            Ok(Shadow {
                model,
                train_rows,
                members,
                nonmembers,
            })
        })
        .collect()
}

/// Trains `cfg.n_proxies` models on `synthetic` with the shadow recipe.
pub fn train_proxies(synthetic: &EncodedTable, cfg: &TfAttackConfig, seed_value: u64) -> Result<Vec<DiffusionModel>> {
    (0..cfg.n_proxies)
        .into_par_iter()
        .map(|i| {
            let train_cfg = TrainConfig {
                seed: seed::derive(seed_value, "tf/proxy-train", i as u64),
                ..cfg.shadow_train.clone()
            };
            diffusion::train(synthetic, &cfg.shadow_spec, &train_cfg)
        })
        .collect()
}

/// Mean loss features over several models.
fn mean_features(models: &[DiffusionModel], rows: &EncodedTable, grid: &TfFeatureGrid) -> Result<Array2<f64>> {
    let mut acc: Option<Array2<f64>> = None;
    for m in models {
        let f = extract_features(m, rows, grid)?;
        acc = Some(match acc {
            None => f,
            Some(a) => a + f,
        });
    }
    let acc = acc.ok_or_else(|| Error::Config("no models to extract features from".into()))?;
    Ok(acc / models.len() as f64)
}

/// Labeled feature matrices, one per shadow. In black-box mode every shadow
/// first samples a synthetic set and the features come from proxies trained
/// on it.
pub fn shadow_features(
    attacker: &EncodedTable,
    shadows: &[Shadow],
    cfg: &TfAttackConfig,
    grid: &TfFeatureGrid,
    seed_value: u64,
) -> Result<Vec<FeatureMatrix>> {
    shadows
        .par_iter()
        .enumerate()
        .map(|(i, shadow)| {
            let rows: Vec<usize> = shadow.members.iter().chain(&shadow.nonmembers).copied().collect();
            let labels: Vec<bool> = shadow
                .members
                .iter()
                .map(|_| true)
                .chain(shadow.nonmembers.iter().map(|_| false))
                .collect();
            let candidates = attacker.select_rows(&rows);
            match cfg.mode {
                AttackMode::WhiteBox => FeatureMatrix::new(
                    extract_features(&shadow.model, &candidates, grid)?,
                    labels,
                    FeatureSource::Shadow(i),
                ),
                AttackMode::BlackBox => {
                    let n = cfg.shadow_synth_size.unwrap_or(cfg.shadow_train_size);
                    let synth_seed = seed::derive(seed_value, "tf/shadow-synth", i as u64);
                    let synthetic = diffusion::sample(&shadow.model, n, synth_seed)?;
                    let proxy_seed = seed::derive(seed_value, "tf/shadow-proxy", i as u64);
                    let proxies = train_proxies(&synthetic, cfg, proxy_seed)?;
                    FeatureMatrix::new(
                        mean_features(&proxies, &candidates, grid)?,
                        labels,
                        FeatureSource::Proxy(i),
                    )
                }
            }
        })
        .collect()
}

/// Member-probability network over loss features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfClassifier {
    pub mlp: Mlp,
    /// Per-feature `(mean, std)` applied before the network when set.
    pub scaling: Option<(Array1<f64>, Array1<f64>)>,
}

impl TfClassifier {
    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    fn prepare(&self, features: &Array2<f64>) -> Array2<f64> {
        match &self.scaling {
            Some((mean, std)) => (features - mean) / std,
            None => features.clone(),
        }
    }

    pub fn predict(&self, features: &Array2<f64>) -> Result<Vec<f64>> {
        if features.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: features.ncols(),
            });
        }
        Ok(self.mlp.forward(self.prepare(features).view()).column(0).to_vec())
    }
}

fn stack(matrices: &[FeatureMatrix]) -> Result<(Array2<f64>, Vec<bool>)> {
    let views: Vec<_> = matrices.iter().map(|m| m.features.view()).collect();
    if views.is_empty() {
        return Err(Error::Label("no feature rows to train on".into()));
    }
    let x = ndarray::concatenate(Axis(0), &views).map_err(|_| Error::Dimension {
        expected: matrices[0].features.ncols(),
        got: matrices.iter().map(|m| m.features.ncols()).find(|&c| c != matrices[0].features.ncols()).unwrap_or(0),
    })?;
    let y = matrices.iter().flat_map(|m| m.labels.iter().copied()).collect();
    Ok((x, y))
}

/// The untrained classifier `train_classifier` starts from.
pub fn init_classifier(input_dim: usize, cfg: &ClassifierConfig, seed_value: u64) -> TfClassifier {
    let mut dims = vec![input_dim];
    dims.extend(&cfg.hidden_dims);
    dims.push(1);
    let mut rng = seed::derived_rng(seed_value, "tf/classifier-init", 0);
    TfClassifier {
        mlp: Mlp::new(&dims, Activation::Tanh, Activation::Sigmoid, &mut rng),
        scaling: None,
    }
}

/// Binary cross-entropy training with Adam on pooled shadow features. The
/// batch size is clamped to the number of rows.
pub fn train_classifier(features: &[FeatureMatrix], cfg: &ClassifierConfig, seed_value: u64) -> Result<TfClassifier> {
    let (x, y) = stack(features)?;
    let pos = y.iter().filter(|&&l| l).count();
    if x.nrows() < 2 || pos == 0 || pos == y.len() {
        return Err(Error::Label(
            "classifier training needs both members and non-members".into(),
        ));
    }
    let mut clf = init_classifier(x.ncols(), cfg, seed_value);
    if cfg.standardize {
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let std = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
        clf.scaling = Some((mean, std));
    }
    let x = clf.prepare(&x);
    let target = Array1::from_iter(y.iter().map(|&l| if l { 1.0 } else { 0.0 }));
    let n = x.nrows();
    let batch = cfg.batch_size.clamp(1, n);
    let mut rng = seed::derived_rng(seed_value, "tf/classifier-train", 0);
    let mut adam = Adam::new(&clf.mlp, cfg.learning_rate, cfg.adam);
    for _ in 0..cfg.steps {
        let (xb, yb) = if batch == n {
            (x.clone(), target.clone())
        } else {
            let idx = index::sample(&mut rng, n, batch).into_vec();
            (x.select(Axis(0), &idx), target.select(Axis(0), &idx))
        };
        let cache = clf.mlp.forward_cached(xb.view());
        let p = cache.output().column(0).to_owned();
        // d(mean BCE)/d(logit) = (p − y) / n
        let grad = ((&p - &yb) / batch as f64).insert_axis(Axis(1));
        let grads = clf.mlp.backward(&cache, grad);
        adam.update(&mut clf.mlp, &grads);
    }
    if !clf.mlp.is_finite() {
        return Err(Error::Train {
            step: cfg.steps,
            last_finite_loss: f64::NAN,
        });
    }
    Ok(clf)
}

/// Mean binary cross-entropy of `clf` on labeled features.
pub fn classifier_loss(clf: &TfClassifier, features: &FeatureMatrix) -> Result<f64> {
    let p = clf.predict(&features.features)?;
    let n = p.len() as f64;
    Ok(p.iter()
        .zip(&features.labels)
        .map(|(&p, &l)| {
            let p = p.clamp(1e-12, 1.0 - 1e-12);
            if l { -p.ln() } else { -(1.0 - p).ln() }
        })
        .sum::<f64>()
        / n)
}

/// Logit of the member probability; same ordering as the probability but
/// free of saturation ties.
fn scores_from(clf: &TfClassifier, features: &Array2<f64>) -> Result<Vec<f64>> {
    let prepared = clf.prepare(features);
    let mut logits_net = clf.mlp.clone();
    logits_net.output = Activation::Identity;
    if prepared.ncols() != clf.input_dim() {
        return Err(Error::Dimension {
            expected: clf.input_dim(),
            got: prepared.ncols(),
        });
    }
    Ok(logits_net.forward(prepared.view()).column(0).to_vec())
}

/// Scores challenge rows with features taken from the target model itself.
/// Scores are classifier logits, ordered like the member probability.
pub fn attack_white_box(
    target: &DiffusionModel,
    challenge: &EncodedTable,
    clf: &TfClassifier,
    grid: &TfFeatureGrid,
) -> Result<Vec<f64>> {
    if clf.input_dim() != grid.feature_dim() {
        return Err(Error::Dimension {
            expected: grid.feature_dim(),
            got: clf.input_dim(),
        });
    }
    scores_from(clf, &extract_features(target, challenge, grid)?)
}

/// Trains proxies on the target's synthetic output and scores challenge rows
/// with proxy features (averaged over proxies).
pub fn attack_black_box(
    synthetic: &EncodedTable,
    challenge: &EncodedTable,
    cfg: &TfAttackConfig,
    clf: &TfClassifier,
    grid: &TfFeatureGrid,
    seed_value: u64,
) -> Result<Vec<f64>> {
    if clf.input_dim() != grid.feature_dim() {
        return Err(Error::Dimension {
            expected: grid.feature_dim(),
            got: clf.input_dim(),
        });
    }
    let proxies = train_proxies(synthetic, cfg, seed::derive(seed_value, "tf/target-proxy", 0))?;
    scores_from(clf, &mean_features(&proxies, challenge, grid)?)
}

/// Shadow stage of the attack: grid, shadows and trained classifier.
#[derive(Clone, Debug)]
pub struct TfAttack {
    pub config: TfAttackConfig,
    pub grid: TfFeatureGrid,
    pub classifier: TfClassifier,
    pub seed: u64,
}

impl TfAttack {
    /// Trains shadows on `attacker` (model-space encoded) and fits the
    /// classifier on their labeled features.
    pub fn fit(attacker: &EncodedTable, cfg: &TfAttackConfig, seed_value: u64) -> Result<Self> {
        let grid = make_grid(cfg.shadow_spec.timesteps, attacker.dim(), cfg.grid_size, seed_value)?;
        let shadows = train_shadows(attacker, cfg, seed_value)?;
        let features = shadow_features(attacker, &shadows, cfg, &grid, seed_value)?;
        let classifier = train_classifier(&features, &cfg.classifier, seed::derive(seed_value, "tf/classifier", 0))?;
        Ok(Self {
            config: cfg.clone(),
            grid,
            classifier,
            seed: seed_value,
        })
    }

    pub fn score_white_box(&self, target: &DiffusionModel, challenge: &EncodedTable) -> Result<Vec<f64>> {
        attack_white_box(target, challenge, &self.classifier, &self.grid)
    }

    pub fn score_black_box(&self, synthetic: &EncodedTable, challenge: &EncodedTable, target_index: u64) -> Result<Vec<f64>> {
        attack_black_box(
            synthetic,
            challenge,
            &self.config,
            &self.classifier,
            &self.grid,
            seed::derive(self.seed, "tf/black-box", target_index),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{model_space, Column, ColumnData, ColumnKind, IdRole, RawTable, TableSchema};
    use rand::Rng;
    use std::sync::Arc;

    fn table(n: usize, seed_value: u64) -> EncodedTable {
        let schema = TableSchema::new(vec![
            Column {
                name: "x".into(),
                kind: ColumnKind::Numerical { min: 0.0, max: 1.0 },
                id_role: IdRole::None,
            },
            Column {
                name: "c".into(),
                kind: ColumnKind::Categorical {
                    categories: vec!["a".into(), "b".into(), "c".into()],
                },
                id_role: IdRole::None,
            },
        ])
        .unwrap();
        let mut rng = seed::rng(seed_value);
        let cols = vec![
            ColumnData::Numeric((0..n).map(|_| rng.gen_range(0.0..1.0)).collect()),
            ColumnData::Categorical((0..n).map(|_| rng.gen_range(0..3)).collect()),
        ];
        model_space(&RawTable::from_columns(Arc::new(schema), cols).unwrap()).unwrap()
    }

    fn small_spec() -> DiffusionSpec {
        DiffusionSpec {
            timesteps: 50,
            hidden_dims: vec![16, 16],
            time_embed_dim: 8,
        }
    }

    #[test]
    fn grid_shapes_follow_timestep_rule() {
        let g = make_grid(2000, 4, 300, 1).unwrap();
        assert_eq!(g.feature_dim(), 2100);
        assert_eq!(make_grid(50, 4, 3, 1).unwrap().timesteps, (3..=9).collect::<Vec<_>>());
        assert_eq!(make_grid(50, 4, 3, 1).unwrap(), make_grid(50, 4, 3, 1).unwrap());
        assert_ne!(make_grid(50, 4, 3, 1).unwrap(), make_grid(50, 4, 3, 2).unwrap());
        assert!(matches!(make_grid(9, 4, 3, 1), Err(Error::Config(_))));
    }

    #[test]
    fn zero_model_features_are_noise_norms() {
        let data = table(3, 1);
        let mut model = diffusion::initialize(&data, &small_spec(), 0).unwrap();
        model.denoiser = diffusion::Denoiser::zeros(&small_spec(), data.dim());
        let grid = make_grid(50, data.dim(), 4, 2).unwrap();
        let f = extract_features(&model, &data, &grid).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let norm = grid.epsilons.row(j).mapv(|v| v * v).sum();
                for k in 0..7 {
                    assert!((f[[i, j * 7 + k]] - norm).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn features_are_rowwise() {
        let data = table(5, 2);
        let model = diffusion::initialize(&data, &small_spec(), 3).unwrap();
        let grid = make_grid(50, data.dim(), 3, 2).unwrap();
        let f = extract_features(&model, &data, &grid).unwrap();
        let perm = [4, 0, 0, 2, 1];
        let g = extract_features(&model, &data.select_rows(&perm), &grid).unwrap();
        for (r, &p) in perm.iter().enumerate() {
            assert_eq!(g.row(r), f.row(p));
        }
        let other = crate::dataset::metric_space(&data.decode().unwrap()).unwrap();
        assert!(matches!(extract_features(&model, &other, &grid), Err(Error::Encoding(_))));
    }

    #[test]
    fn shadows_are_deterministic_and_labeled() {
        let data = table(60, 3);
        let cfg = TfAttackConfig {
            n_shadows: 2,
            shadow_train_size: 20,
            shadow_spec: small_spec(),
            shadow_train: TrainConfig {
                steps: 5,
                batch_size: 8,
                ..TrainConfig::default()
            },
            ..TfAttackConfig::default()
        };
        assert_eq!(cfg.budget(), 10);
        let a = train_shadows(&data, &cfg, 9).unwrap();
        let b = train_shadows(&data, &cfg, 9).unwrap();
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.model.fingerprint, y.model.fingerprint);
            assert!(x.members.iter().all(|m| x.train_rows.contains(m)));
            assert!(x.nonmembers.iter().all(|m| !x.train_rows.contains(m)));
        }
        let big = TfAttackConfig {
            shadow_train_size: 55,
            ..cfg
        };
        assert!(matches!(train_shadows(&data, &big, 9), Err(Error::Split(_))));
    }

    fn separable(n: usize, seed_value: u64) -> FeatureMatrix {
        let mut rng = seed::rng(seed_value);
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::new();
        for i in 0..n {
            let a: f64 = rng.gen_range(-1.0..1.0);
            let b: f64 = rng.gen_range(-1.0..1.0);
            let label = a + 0.5 * b > 0.0;
            // push points away from the boundary
            let shift = if label { 0.2 } else { -0.2 };
            x[[i, 0]] = a + shift;
            x[[i, 1]] = b;
            y.push(label);
        }
        FeatureMatrix::new(x, y, FeatureSource::Shadow(0)).unwrap()
    }

    #[test]
    fn separable_features_are_learned() {
        let train = separable(400, 1);
        let cfg = ClassifierConfig {
            learning_rate: 1e-3,
            steps: 1500,
            ..ClassifierConfig::default()
        };
        let clf = train_classifier(&[train.clone()], &cfg, 4).unwrap();
        let p = clf.predict(&train.features).unwrap();
        let acc = p
            .iter()
            .zip(&train.labels)
            .filter(|(&p, &l)| (p > 0.5) == l)
            .count() as f64
            / 400.0;
        assert!(acc >= 0.99, "{acc}");
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn random_features_give_chance_accuracy() {
        let cfg = ClassifierConfig {
            steps: 300,
            hidden_dims: vec![32, 32],
            ..ClassifierConfig::default()
        };
        let mut accs = Vec::new();
        for s in 0..5u64 {
            let mut rng = seed::rng(100 + s);
            let mk = |rng: &mut seed::Rng, n: usize| {
                let x = Array2::from_shape_simple_fn((n, 10), || StandardNormal.sample(rng));
                let y = (0..n).map(|i| i % 2 == 0).collect();
                FeatureMatrix::new(x, y, FeatureSource::Target).unwrap()
            };
            let train = mk(&mut rng, 400);
            let test = mk(&mut rng, 400);
            let clf = train_classifier(&[train], &cfg, s).unwrap();
            let p = clf.predict(&test.features).unwrap();
            let acc = p.iter().zip(&test.labels).filter(|(&p, &l)| (p > 0.5) == l).count() as f64 / 400.0;
            accs.push(acc);
        }
        assert!(accs.iter().all(|a| (0.4..=0.6).contains(a)), "{accs:?}");
    }

    #[test]
    fn zero_lr_keeps_initial_classifier() {
        let train = separable(50, 2);
        let cfg = ClassifierConfig {
            learning_rate: 0.0,
            steps: 20,
            hidden_dims: vec![8, 8],
            ..ClassifierConfig::default()
        };
        let clf = train_classifier(&[train.clone()], &cfg, 7).unwrap();
        let init = init_classifier(2, &cfg, 7);
        assert_eq!(clf.predict(&train.features).unwrap(), init.predict(&train.features).unwrap());
    }

    #[test]
    fn single_class_is_rejected() {
        let f = FeatureMatrix::new(Array2::zeros((4, 2)), vec![true; 4], FeatureSource::Target).unwrap();
        assert!(matches!(
            train_classifier(&[f], &ClassifierConfig::default(), 0),
            Err(Error::Label(_))
        ));
    }

    #[test]
    fn feature_matrix_round_trip() {
        let f = separable(7, 3);
        let dir = tempfile::tempdir().unwrap();
        f.save(dir.path(), "shadow0").unwrap();
        let back = FeatureMatrix::load(dir.path(), "shadow0").unwrap();
        assert_eq!(back.labels, f.labels);
        assert_eq!(back.source, f.source);
        assert!(back.features.iter().zip(&f.features).all(|(a, b)| *a == *b as f32 as f64));
    }

    #[test]
    fn white_box_checks_dimensions() {
        let data = table(4, 5);
        let model = diffusion::initialize(&data, &small_spec(), 3).unwrap();
        let grid = make_grid(50, data.dim(), 3, 2).unwrap();
        let clf = init_classifier(5, &ClassifierConfig::default(), 0);
        assert!(matches!(
            attack_white_box(&model, &data, &clf, &grid),
            Err(Error::Dimension { .. })
        ));
    }
}
