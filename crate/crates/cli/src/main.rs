use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use tabmia::attack_tf::{AttackMode, TfAttack, TfAttackConfig};
use tabmia::dataset::{encode_in, ingest, model_space, IdRole, RawTable, SchemaSpec};
use tabmia::diffusion::{self, DiffusionModel, DiffusionSpec, TrainConfig};
use tabmia::ensemble::{score_features, EnsembleConfig, ShadowWorld};
use tabmia::evaluation::{auc, roc_curve, tpr_at_fpr, ScoredChallenges};
use tabmia::harness::{self, generate_toy_dataset, ExperimentConfig, ToySpec};
use tabmia::heuristics::{heuristic_report, DEFAULT_HR_THRESHOLD_PCT};
use tabmia::quality::{quality_report, QualityConfig};
use tabmia::scenarios::{apply_mismatch, divergence, MismatchKind, MismatchSpec};

#[derive(Parser)]
#[command(name = "tabmia", version, about = "Membership-inference audit bench for tabular diffusion models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    BerkaLike,
    DiabetesLike,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    White,
    Black,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mismatch {
    PermuteMarginals,
    UniformNoise,
    DisjointUnits,
    DisjointTime,
}

/// A CSV file and the schema it is read with.
#[derive(clap::Args)]
struct TableArgs {
    /// Schema JSON (as written by gen-data).
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a toy population and its pinned schema.
    GenData {
        #[arg(long, value_enum, default_value = "berka-like")]
        preset: Preset,
        /// Full generator spec (JSON); overrides --preset.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 5000)]
        rows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        schema_out: PathBuf,
    },
    /// Train a diffusion model on every row of a CSV.
    TrainTarget {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        table: TableArgs,
        /// JSON with optional "spec" and "train" objects.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Model directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample synthetic rows from a trained model.
    Synthesize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        rows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Loss-feature attack with shadow models.
    AttackTf {
        #[arg(long, value_enum)]
        mode: Mode,
        /// Attacker reference rows.
        #[arg(long)]
        attacker: PathBuf,
        #[arg(long)]
        challenge: PathBuf,
        /// One 0/1 membership label per challenge row.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[command(flatten)]
        table: TableArgs,
        /// Target model directory (white box).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Target synthetic rows (black box).
        #[arg(long)]
        synthetic: Option<PathBuf>,
        /// TfAttackConfig JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distance, density-ratio and RMIA ensemble attack.
    AttackEnsemble {
        #[arg(long)]
        attacker: PathBuf,
        #[arg(long)]
        challenge: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        synthetic: PathBuf,
        #[command(flatten)]
        table: TableArgs,
        /// EnsembleConfig JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Directory for feature tables and the meta-classifier dump.
        #[arg(long)]
        features_out: Option<PathBuf>,
    },
    /// Privacy heuristics and quality metrics of a synthetic table.
    Metrics {
        #[arg(long)]
        synthetic: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        holdout: PathBuf,
        #[command(flatten)]
        table: TableArgs,
        #[arg(long, default_value_t = DEFAULT_HR_THRESHOLD_PCT)]
        hr_threshold: f64,
        /// Also compute quality metrics.
        #[arg(long)]
        quality: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare two tables, optionally after applying a mismatch to the second.
    Divergence {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[command(flatten)]
        table: TableArgs,
        #[arg(long, value_enum)]
        mismatch: Option<Mismatch>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 1000)]
        permutations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// TPR at a fixed FPR and AUC of a scored challenge file.
    Evaluate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        fpr: f64,
    },
    /// Run an experiment sweep from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Cell cache directory (AUDIT_CACHE_DIR takes precedence).
        #[arg(long)]
        cache: Option<PathBuf>,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| tabmia::Error::Config(format!("{}: {e}", path.display())))
        .map_err(Into::into)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Reads a CSV with the full schema, or with its feature columns alone when
/// the file carries no key columns (as synthetic output does).
fn read_table(path: &Path, schema: &SchemaSpec) -> Result<RawTable> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let features = SchemaSpec {
        columns: schema.columns.iter().filter(|c| c.id_role == IdRole::None).cloned().collect(),
    };
    let header_width = bytes.split(|&b| b == b'\n').next().map_or(0, |h| h.split(|&b| b == b',').count());
    let spec = if header_width == features.columns.len() { &features } else { schema };
    Ok(ingest(&bytes, spec).with_context(|| format!("parsing {}", path.display()))?)
}

fn read_schema(args: &TableArgs) -> Result<SchemaSpec> {
    let text = fs::read_to_string(&args.schema).with_context(|| format!("reading {}", args.schema.display()))?;
    Ok(SchemaSpec::from_json(&text)?)
}

fn read_labels(path: &Path) -> Result<Vec<bool>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        match line.trim() {
            "1" | "true" => labels.push(true),
            "0" | "false" => labels.push(false),
            "" => {}
            _ if i == 0 => {}
            other => bail!("{}: bad label {other:?} on line {}", path.display(), i + 1),
        }
    }
    Ok(labels)
}

/// Writes scores with labels (evaluate-ready) when known, else bare scores.
fn write_scores(path: &Path, scores: &[f64], labels: Option<&[bool]>) -> Result<()> {
    let bytes = match labels {
        Some(l) => {
            if l.len() != scores.len() {
                bail!("{} labels for {} challenge rows", l.len(), scores.len());
            }
            ScoredChallenges::from_scores(scores, l).to_csv()?
        }
        None => {
            let mut s = String::from("challenge_row_id,score\n");
            for (i, v) in scores.iter().enumerate() {
                s.push_str(&format!("{i},{v}\n"));
            }
            s.into_bytes()
        }
    };
    write_file(path, &bytes)
}

#[derive(serde::Deserialize, Default)]
#[serde(default)]
struct TrainFile {
    spec: DiffusionSpec,
    train: TrainConfig,
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::GenData {
            preset,
            spec,
            rows,
            seed,
            out,
            schema_out,
        } => {
            let spec = match spec {
                Some(p) => read_json::<ToySpec>(&p)?,
                None => match preset {
                    Preset::BerkaLike => ToySpec::berka_like(rows),
                    Preset::DiabetesLike => ToySpec::diabetes_like(rows),
                },
            };
            let table = generate_toy_dataset(&spec, seed)?;
            write_file(&out, &table.to_csv()?)?;
            write_file(&schema_out, &serde_json::to_vec_pretty(&table.schema().to_spec())?)?;
            info!("wrote {} rows to {}", table.n_rows(), out.display());
        }
        Command::TrainTarget {
            data,
            table,
            config,
            seed,
            out,
        } => {
            let schema = read_schema(&table)?;
            let rows = read_table(&data, &schema)?.features_only();
            let mut cfg = match config {
                Some(p) => read_json::<TrainFile>(&p)?,
                None => TrainFile::default(),
            };
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            let model = diffusion::train(&model_space(&rows)?, &cfg.spec, &cfg.train)?;
            model.save(&out)?;
            info!("saved model to {}", out.display());
        }
        Command::Synthesize { model, rows, seed, out } => {
            let model = DiffusionModel::load(&model)?;
            let table = diffusion::sample(&model, rows, seed)?.decode()?;
            write_file(&out, &table.to_csv()?)?;
        }
        Command::AttackTf {
            mode,
            attacker,
            challenge,
            labels,
            table,
            model,
            synthetic,
            config,
            seed,
            out,
        } => {
            let schema = read_schema(&table)?;
            let mut cfg: TfAttackConfig = match config {
                Some(p) => read_json(&p)?,
                None => TfAttackConfig::default(),
            };
            cfg.mode = match mode {
                Mode::White => AttackMode::WhiteBox,
                Mode::Black => AttackMode::BlackBox,
            };
            let attacker = model_space(&read_table(&attacker, &schema)?.features_only())?;
            let ctx = attacker.context();
            let challenge = encode_in(&read_table(&challenge, &schema)?.features_only(), &ctx)?;
            let labels = labels.map(|p| read_labels(&p)).transpose()?;
            let attack = TfAttack::fit(&attacker, &cfg, seed)?;
            let scores = match mode {
                Mode::White => {
                    let Some(m) = model else { bail!("white-box mode needs --model") };
                    let target = DiffusionModel::load(&m)?;
                    attack.score_white_box(&target, &challenge)?
                }
                Mode::Black => {
                    let Some(s) = synthetic else { bail!("black-box mode needs --synthetic") };
                    let syn = encode_in(&read_table(&s, &schema)?.features_only(), &ctx)?;
                    attack.score_black_box(&syn, &challenge, 0)?
                }
            };
            write_scores(&out, &scores, labels.as_deref())?;
        }
        Command::AttackEnsemble {
            attacker,
            challenge,
            labels,
            synthetic,
            table,
            config,
            seed,
            out,
            features_out,
        } => {
            let schema = read_schema(&table)?;
            let cfg: EnsembleConfig = match config {
                Some(p) => read_json(&p)?,
                None => EnsembleConfig::default(),
            };
            let attacker = model_space(&read_table(&attacker, &schema)?.features_only())?;
            let ctx = attacker.context();
            let challenge = encode_in(&read_table(&challenge, &schema)?.features_only(), &ctx)?;
            let syn = encode_in(&read_table(&synthetic, &schema)?.features_only(), &ctx)?;
            let labels = labels.map(|p| read_labels(&p)).transpose()?;
            let world = ShadowWorld::prepare(&attacker, &cfg, seed)?;
            let meta = world.fit_meta(&cfg.ablation())?;
            let features = world.challenge_features(&syn, &challenge, 0)?;
            let scores = score_features(&meta, &features, &cfg.ablation())?;
            if let Some(dir) = features_out {
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                world.meta_features.write_csv(&dir.join("meta_features.csv"))?;
                features.write_csv(&dir.join("challenge_features.csv"))?;
                meta.model.save_json(&dir.join("meta_classifier.json"))?;
            }
            write_scores(&out, &scores, labels.as_deref())?;
        }
        Command::Metrics {
            synthetic,
            train,
            holdout,
            table,
            hr_threshold,
            quality,
            seed,
            out,
        } => {
            let schema = read_schema(&table)?;
            let syn = read_table(&synthetic, &schema)?.features_only();
            let train = read_table(&train, &schema)?.features_only();
            let holdout = read_table(&holdout, &schema)?.features_only();
            let mut report = serde_json::Map::new();
            report.insert("heuristics".into(), serde_json::to_value(heuristic_report(&syn, &train, &holdout, hr_threshold)?)?);
            if quality {
                let q = quality_report(&syn, &train, &holdout, &QualityConfig::default(), seed)?;
                report.insert("quality".into(), serde_json::to_value(q)?);
            }
            write_file(&out, &serde_json::to_vec_pretty(&report)?)?;
        }
        Command::Divergence {
            a,
            b,
            table,
            mismatch,
            alpha,
            permutations,
            seed,
            out,
        } => {
            let schema = read_schema(&table)?;
            let a = read_table(&a, &schema)?;
            let mut b = read_table(&b, &schema)?;
            if let Some(m) = mismatch {
                let kind = match m {
                    Mismatch::PermuteMarginals => MismatchKind::PermuteMarginals,
                    Mismatch::UniformNoise => MismatchKind::UniformNoise,
                    Mismatch::DisjointUnits => MismatchKind::DisjointUnits,
                    Mismatch::DisjointTime => MismatchKind::DisjointTime,
                };
                b = apply_mismatch(&b, &MismatchSpec::new(kind, seed))?;
            }
            let report = divergence(&a.features_only(), &b.features_only(), alpha, permutations, seed)?;
            write_file(&out, &serde_json::to_vec_pretty(&report)?)?;
        }
        Command::Evaluate { scores, fpr } => {
            let bytes = fs::read(&scores).with_context(|| format!("reading {}", scores.display()))?;
            let scored = ScoredChallenges::from_csv(&bytes)?;
            let result = serde_json::json!({
                "fpr": fpr,
                "tpr_at_fpr": tpr_at_fpr(&scored, fpr)?,
                "auc": auc(&roc_curve(&scored)?),
                "n": scored.points.len(),
            });
            println!("{}", serde_json::to_string_pretty(&result)?);
        }
        Command::Run { config, out, cache } => {
            let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let cfg = ExperimentConfig::from_json(&text)?;
            let cache = harness::cache_dir(cache.as_deref());
            let report = harness::run_experiment(&cfg, cache.as_deref())?;
            harness::emit_report(&report, &out)?;
            let failed = report.n_failed();
            if failed > 0 {
                log::warn!("{failed} of {} cells had failures", report.cells.len());
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let invalid = matches!(e.downcast_ref::<tabmia::Error>(), Some(tabmia::Error::Config(_)));
            ExitCode::from(if invalid { 2 } else { 1 })
        }
    }
}
