//! Seeded experiment sweeps over target training, synthesis and attacker
//! settings, plus the toy populations used in place of real tables.
//!
//! A sweep varies one axis; every other setting comes from a defaults block
//! that holds the full-scale values and can be shrunk by a single
//! `desk_scale` divisor. Each axis value is a cell. Cells are cached by a
//! content hash so that reruns are cheap and reproduce the same report.

mod config;
mod report;
mod run;
mod toy;

pub use config::{
    model_variant, value_label, AttackKind, CellSettings, DatasetSource, Defaults, ExperimentConfig, MetricKind,
    SweepAxis, MODEL_VARIANTS, SHADOW_MISMATCHES,
};
pub use report::{cells_csv, emit_report, load_report};
pub use run::{
    cache_dir, load_dataset, run_experiment, AttackResult, AttackScore, AuditReport, CellReport, Outcome, Provenance,
    CACHE_ENV, FPR_TARGET,
};
pub use toy::{generate_toy_dataset, CategoricalSpec, NumericSpec, ToySpec};
