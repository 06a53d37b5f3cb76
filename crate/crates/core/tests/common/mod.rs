#![allow(dead_code)]

use serde_json::Value;
use tabmia::attack_tf::ClassifierConfig;
use tabmia::ensemble::{EnsembleConfig, FleetConfig};
use tabmia::harness::{AttackKind, DatasetSource, Defaults, ExperimentConfig, MetricKind, SweepAxis};
use tabmia::quality::QualityConfig;

/// Defaults small enough for a full sweep to finish in seconds.
pub fn tiny_defaults() -> Defaults {
    let mut d = Defaults::berka();
    d.timesteps = 20;
    d.hidden_dims = vec![16, 16];
    d.time_embed_dim = 4;
    d.train_steps = 40;
    d.batch_size = 16;
    d.train_size = 30;
    d.n_targets = 2;
    d.challenge_size = 20;
    d.holdout_size = 50;
    d.n_shadows = 2;
    d.shadow_train_size = 30;
    d.tf_grid_size = 3;
    d.classifier = ClassifierConfig {
        hidden_dims: vec![8],
        learning_rate: 1e-3,
        steps: 20,
        batch_size: 64,
        ..ClassifierConfig::default()
    };
    d.ensemble = EnsembleConfig {
        rmia_fleet: FleetConfig {
            n_single_phase: 1,
            pretrain_bases: 1,
            finetuned_per_base: 1,
        },
        meta_train_budget: (10, 10),
        hp_trials: 2,
        n_trees: 10,
        population_size: 20,
        grid_size: 3,
        ..EnsembleConfig::default()
    };
    d.quality = QualityConfig {
        forest: tabmia::quality::ForestConfig {
            n_trees: 5,
            ..Default::default()
        },
        ..QualityConfig::default()
    };
    d.divergence_permutations = 50;
    d
}

pub fn tiny_experiment(axis: SweepAxis, values: Vec<Value>) -> ExperimentConfig {
    ExperimentConfig {
        name: "tiny".into(),
        dataset: DatasetSource::Preset {
            name: "berka_like".into(),
            n_rows: 600,
            seed: 3,
        },
        axis,
        values,
        defaults: tiny_defaults(),
        desk_scale: None,
        attacks: vec![AttackKind::TfWhite, AttackKind::TfBlack, AttackKind::Ensemble],
        metrics: vec![MetricKind::Heuristics, MetricKind::Quality, MetricKind::Divergence],
        master_seed: 7,
    }
}
