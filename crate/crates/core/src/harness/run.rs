use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{value_label, AttackKind, CellSettings, DatasetSource, ExperimentConfig, MetricKind};
use super::toy::{generate_toy_dataset, ToySpec};
use crate::attack_tf::{AttackMode, TfAttack, TfAttackConfig};
use crate::dataset::{encode_in, ingest, make_splits, model_space, DataContext, RawTable, SchemaSpec};
use crate::diffusion::{self, DiffusionModel, TrainConfig};
use crate::ensemble::EnsembleAttack;
use crate::error::{Error, Result};
use crate::evaluation::{auc, roc_curve, tpr_at_fpr, ScoredChallenges};
use crate::heuristics::{heuristic_report, HeuristicReport};
use crate::quality::{quality_report, QualityReport};
use crate::scenarios::{apply_mismatch, divergence, partition_by_key, DivergenceReport};
use crate::seed;

/// Environment variable overriding the cell cache directory.
pub const CACHE_ENV: &str = "AUDIT_CACHE_DIR";
pub const FPR_TARGET: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome<T> {
    Ok { value: T },
    Failed { error: String },
}

impl<T> Outcome<T> {
    fn from_result(r: Result<T>) -> Self {
        match r {
            Ok(value) => Outcome::Ok { value },
            Err(e) => Outcome::Failed { error: e.to_string() },
        }
    }

    pub fn ok(&self) -> Option<&T> {
        match self {
            Outcome::Ok { value } => Some(value),
            Outcome::Failed { .. } => None,
        }
    }

    pub fn error(&self) -> Option<&str> {
        match self {
            Outcome::Ok { .. } => None,
            Outcome::Failed { error } => Some(error),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackScore {
    pub tpr_at_fpr: f64,
    pub auc: f64,
    pub n_challenge: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub attack: AttackKind,
    pub result: Outcome<AttackScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub axis_value: Value,
    pub label: String,
    pub cache_key: String,
    /// Failure of the shared setup (splits, targets); attacks and metrics
    /// are then absent.
    pub setup_error: Option<String>,
    pub attacks: Vec<AttackResult>,
    pub heuristics: Option<Outcome<HeuristicReport>>,
    pub quality: Option<Outcome<QualityReport>>,
    pub divergence: Option<Outcome<DivergenceReport>>,
}

impl CellReport {
    pub fn failed(&self) -> bool {
        self.setup_error.is_some()
            || self.attacks.iter().any(|a| a.result.error().is_some())
            || [
                self.heuristics.as_ref().and_then(|o| o.error()),
                self.quality.as_ref().and_then(|o| o.error()),
                self.divergence.as_ref().and_then(|o| o.error()),
            ]
            .iter()
            .any(Option::is_some)
    }

    pub fn tpr(&self, attack: AttackKind) -> Option<f64> {
        self.attacks
            .iter()
            .find(|a| a.attack == attack)
            .and_then(|a| a.result.ok())
            .map(|s| s.tpr_at_fpr)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
    pub code_version: String,
    pub seed_derivation: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub name: String,
    pub axis: String,
    pub provenance: Provenance,
    pub cells: Vec<CellReport>,
}

impl AuditReport {
    pub fn n_failed(&self) -> usize {
        self.cells.iter().filter(|c| c.failed()).count()
    }

    pub fn cell(&self, label: &str) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.label == label)
    }
}

pub fn load_dataset(source: &DatasetSource) -> Result<RawTable> {
    match source {
        DatasetSource::Csv { path, schema } => {
            let spec_text = fs::read_to_string(schema).map_err(|e| Error::io(schema, e))?;
            let spec = SchemaSpec::from_json(&spec_text)?;
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            ingest(&bytes, &spec)
        }
        DatasetSource::Preset { name, n_rows, seed } => {
            let spec = match name.as_str() {
                "berka_like" => ToySpec::berka_like(*n_rows),
                "diabetes_like" => ToySpec::diabetes_like(*n_rows),
                other => return Err(Error::Config(format!("unknown dataset preset {other:?}"))),
            };
            generate_toy_dataset(&spec, *seed)
        }
        DatasetSource::Toy { spec, seed } => generate_toy_dataset(spec, *seed),
    }
}

/// Cache location: `AUDIT_CACHE_DIR` when set, otherwise `fallback`.
pub fn cache_dir(fallback: Option<&Path>) -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV)
        .map(PathBuf::from)
        .or_else(|| fallback.map(Path::to_path_buf))
}

#[derive(Serialize)]
struct CellKey<'a> {
    code_version: &'a str,
    data: &'a str,
    settings: &'a CellSettings,
    attacks: &'a [AttackKind],
    metrics: &'a [MetricKind],
    master_seed: u64,
}

/// Runs every cell of the sweep. Cells already present in `cache` are
/// reused; failures are recorded per cell and per attack.
pub fn run_experiment(cfg: &ExperimentConfig, cache: Option<&Path>) -> Result<AuditReport> {
    cfg.validate()?;
    let data = load_dataset(&cfg.dataset)?;
    let fingerprint = data.fingerprint();
    let base = cfg.effective_defaults()?;
    let divisor = cfg.desk_scale.unwrap_or(1.0);
    let mut attacks = cfg.attacks.clone();
    attacks.sort();
    attacks.dedup();
    let mut metrics = cfg.metrics.clone();
    metrics.sort();
    metrics.dedup();
    let version = env!("CARGO_PKG_VERSION");
    if let Some(dir) = cache {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let cells = cfg
        .values
        .par_iter()
        .map(|value| {
            let settings = CellSettings::resolve(&base, cfg.axis, value, divisor, cfg.master_seed)?;
            let key = seed::hex_digest(&serde_json::to_vec(&CellKey {
                code_version: version,
                data: &fingerprint,
                settings: &settings,
                attacks: &attacks,
                metrics: &metrics,
                master_seed: cfg.master_seed,
            })?);
            let path = cache.map(|d| d.join(format!("{key}.json")));
            if let Some(p) = &path {
                if let Ok(bytes) = fs::read(p) {
                    match serde_json::from_slice::<CellReport>(&bytes) {
                        Ok(cell) if cell.axis_value == *value => {
                            log::info!("cell {} reused from cache", value_label(value));
                            return Ok(cell);
                        }
                        _ => log::warn!("ignoring unreadable cache entry {}", p.display()),
                    }
                }
            }
            log::info!("running cell {}", value_label(value));
            let cell = run_cell(&data, value, key, &settings, &attacks, &metrics, cfg.master_seed);
            if let Some(p) = &path {
                if !cell.failed() {
                    let bytes = serde_json::to_vec_pretty(&cell)?;
                    fs::write(p, bytes).map_err(|e| Error::io(p, e))?;
                }
            }
            Ok(cell)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(AuditReport {
        name: cfg.name.clone(),
        axis: cfg.axis.name(),
        provenance: Provenance {
            config_hash: cfg.hash(),
            master_seed: cfg.master_seed,
            code_version: version.into(),
            seed_derivation: "subseed = first 8 bytes (little endian) of sha256(master_le || role || index_le)".into(),
        },
        cells,
    })
}

/// Everything one cell's attacks and metrics share.
struct CellWorld {
    context: DataContext,
    attacker_rows: RawTable,
    targets: Vec<TargetRun>,
}

struct TargetRun {
    model: DiffusionModel,
    train: RawTable,
    holdout: RawTable,
    challenge: RawTable,
    labels: Vec<bool>,
    synthetic: RawTable,
}

fn build_world(data: &RawTable, s: &CellSettings, master_seed: u64) -> Result<CellWorld> {
    let (population, attacker_rows) = match &s.data_mismatch {
        Some(m) if m.is_partition() => {
            let (target_side, attacker_side) = partition_by_key(data, m)?;
            (data.select_rows(&target_side), Some(data.select_rows(&attacker_side)))
        }
        _ => (data.clone(), None),
    };
    let plan = make_splits(population.n_rows(), &s.split, seed::derive(master_seed, "harness/split", 0))?;
    let features = population.features_only();
    let attacker_full = match attacker_rows {
        Some(a) => a,
        None => {
            let pool = population.select_rows(&plan.attacker_pool());
            match &s.data_mismatch {
                Some(m) => apply_mismatch(&pool, m)?,
                None => pool,
            }
        }
    };
    let attacker_rows = attacker_full.features_only();
    let context = model_space(&features)?.context();
    let targets = plan
        .targets
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let train = features.select_rows(&t.train);
            let cfg = TrainConfig {
                seed: seed::derive(master_seed, "harness/target", i as u64),
                ..s.target_train.clone()
            };
            let model = diffusion::train(&encode_in(&train, &context)?, &s.target_spec, &cfg)?;
            let synthetic = diffusion::sample(&model, s.synth_size, seed::derive(master_seed, "harness/synth", i as u64))?.decode()?;
            Ok(TargetRun {
                model,
                train,
                holdout: features.select_rows(&t.holdout),
                challenge: features.select_rows(&t.challenge),
                labels: t.challenge_labels.clone(),
                synthetic,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CellWorld {
        context,
        attacker_rows,
        targets,
    })
}

fn pooled_score(world: &CellWorld, mut score: impl FnMut(usize, &TargetRun) -> Result<Vec<f64>>) -> Result<AttackScore> {
    let mut pooled = ScoredChallenges::default();
    for (i, t) in world.targets.iter().enumerate() {
        let s = score(i, t)?;
        pooled.extend(ScoredChallenges::from_scores(&s, &t.labels).points);
    }
    Ok(AttackScore {
        tpr_at_fpr: tpr_at_fpr(&pooled, FPR_TARGET)?,
        auc: auc(&roc_curve(&pooled)?),
        n_challenge: pooled.points.len(),
    })
}

fn run_attack(world: &CellWorld, s: &CellSettings, kind: AttackKind, master_seed: u64) -> Result<AttackScore> {
    let attacker = encode_in(&world.attacker_rows, &world.context)?;
    let enc = |t: &RawTable| encode_in(t, &world.context);
    match kind {
        AttackKind::TfWhite | AttackKind::TfBlack => {
            let mode = if kind == AttackKind::TfWhite { AttackMode::WhiteBox } else { AttackMode::BlackBox };
            let cfg = TfAttackConfig { mode, ..s.tf.clone() };
            let attack = TfAttack::fit(&attacker, &cfg, seed::derive(master_seed, "harness/tf", mode as u64))?;
            pooled_score(world, |i, t| match mode {
                AttackMode::WhiteBox => attack.score_white_box(&t.model, &enc(&t.challenge)?),
                AttackMode::BlackBox => attack.score_black_box(&enc(&t.synthetic)?, &enc(&t.challenge)?, i as u64),
            })
        }
        AttackKind::Ensemble => {
            let attack = EnsembleAttack::fit(&attacker, &s.ensemble, seed::derive(master_seed, "harness/ensemble", 0))?;
            pooled_score(world, |i, t| attack.score(&enc(&t.synthetic)?, &enc(&t.challenge)?, i as u64))
        }
    }
}

fn run_cell(
    data: &RawTable,
    value: &Value,
    cache_key: String,
    s: &CellSettings,
    attacks: &[AttackKind],
    metrics: &[MetricKind],
    master_seed: u64,
) -> CellReport {
    let mut cell = CellReport {
        axis_value: value.clone(),
        label: value_label(value),
        cache_key,
        setup_error: None,
        attacks: Vec::new(),
        heuristics: None,
        quality: None,
        divergence: None,
    };
    let world = match build_world(data, s, master_seed) {
        Ok(w) => w,
        Err(e) => {
            log::warn!("cell {} failed: {e}", cell.label);
            cell.setup_error = Some(e.to_string());
            return cell;
        }
    };
    cell.attacks = attacks
        .iter()
        .map(|&kind| {
            let r = run_attack(&world, s, kind, master_seed);
            if let Err(e) = &r {
                log::warn!("cell {}: {} failed: {e}", cell.label, kind.name());
            }
            AttackResult {
                attack: kind,
                result: Outcome::from_result(r),
            }
        })
        .collect();
    // metrics describe the first target
    let t = &world.targets[0];
    for m in metrics {
        match m {
            MetricKind::Heuristics => {
                cell.heuristics = Some(Outcome::from_result(heuristic_report(&t.synthetic, &t.train, &t.holdout, s.hr_threshold_pct)))
            }
            MetricKind::Quality => {
                cell.quality = Some(Outcome::from_result(quality_report(
                    &t.synthetic,
                    &t.train,
                    &t.holdout,
                    &s.quality,
                    seed::derive(master_seed, "harness/quality", 0),
                )))
            }
            MetricKind::Divergence => {
                cell.divergence = Some(Outcome::from_result(divergence(
                    &t.train,
                    &world.attacker_rows,
                    s.divergence_alpha,
                    s.divergence_permutations,
                    seed::derive(master_seed, "harness/divergence", 0),
                )))
            }
        }
    }
    cell
}
