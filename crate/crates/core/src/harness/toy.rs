use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, ColumnData, ColumnKind, IdRole, RawTable, TableSchema};
use crate::error::{Error, Result};
use crate::seed;

/// A numeric column `x = scale·(l·f + √(1−l²)·e) + offset + drift·period`,
/// where `f` is the shared standard-normal factor and `e` independent noise.
/// Two columns with loadings `l_a`, `l_b` and no drift correlate at `l_a·l_b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericSpec {
    pub loading: f64,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub offset: f64,
    /// Mean shift per unit of normalized time (0 at the first period, 1 at
    /// the last).
    #[serde(default)]
    pub drift: f64,
}

fn one() -> f64 {
    1.0
}

/// A categorical column drawn from `softmax(bias_c + loading·f·(c − (k−1)/2))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalSpec {
    pub n_categories: usize,
    pub loading: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    pub n_rows: usize,
    pub numeric: Vec<NumericSpec>,
    pub categorical: Vec<CategoricalSpec>,
    /// Number of distinct units; adds a `unit_id` key column.
    #[serde(default)]
    pub n_units: Option<usize>,
    /// Share of the factor's variance explained by the unit.
    #[serde(default)]
    pub unit_effect: f64,
    /// Number of time periods; adds a `period` key column.
    #[serde(default)]
    pub n_periods: Option<usize>,
}

impl ToySpec {
    /// Four numeric and four categorical columns with account and time keys.
    /// Columns `n0` and `n1` have a population correlation of 0.8.
    pub fn berka_like(n_rows: usize) -> Self {
        let l = 0.8f64.sqrt();
        Self {
            n_rows,
            numeric: vec![
                NumericSpec { loading: l, scale: 1000.0, offset: 5000.0, drift: 0.0 },
                NumericSpec { loading: l, scale: 800.0, offset: 20000.0, drift: 0.0 },
                NumericSpec { loading: 0.6, scale: 50.0, offset: 100.0, drift: 0.3 },
                NumericSpec { loading: 0.3, scale: 1.0, offset: 0.0, drift: 0.0 },
            ],
            categorical: vec![
                CategoricalSpec { n_categories: 3, loading: 1.5 },
                CategoricalSpec { n_categories: 4, loading: 1.0 },
                CategoricalSpec { n_categories: 5, loading: 0.5 },
                CategoricalSpec { n_categories: 6, loading: 0.0 },
            ],
            n_units: Some(200),
            unit_effect: 0.3,
            n_periods: Some(24),
        }
    }

    /// Wider table with more categorical columns and a patient key.
    pub fn diabetes_like(n_rows: usize) -> Self {
        let numeric = [0.7, 0.7, 0.5, 0.4, 0.3, 0.2, 0.1, 0.0]
            .iter()
            .enumerate()
            .map(|(i, &loading)| NumericSpec {
                loading,
                scale: 1.0 + i as f64,
                offset: 10.0 * i as f64,
                drift: 0.0,
            })
            .collect();
        let categorical = (0..16)
            .map(|i| CategoricalSpec {
                n_categories: 2 + i % 5,
                loading: [1.5, 1.0, 0.5, 0.0][i % 4],
            })
            .collect();
        Self {
            n_rows,
            numeric,
            categorical,
            n_units: Some(n_rows / 2 + 1),
            unit_effect: 0.1,
            n_periods: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rows < 1 {
            return Err(Error::Config("toy dataset needs at least one row".into()));
        }
        if self.numeric.is_empty() && self.categorical.is_empty() {
            return Err(Error::Config("toy dataset needs at least one feature column".into()));
        }
        if let Some(n) = self.numeric.iter().find(|n| !(n.loading.abs() <= 1.0) || !(n.scale > 0.0)) {
            return Err(Error::Config(format!("invalid numeric column spec {n:?}")));
        }
        if self.categorical.iter().any(|c| c.n_categories < 1) {
            return Err(Error::Config("categorical columns need at least one category".into()));
        }
        if !(0.0..=1.0).contains(&self.unit_effect) {
            return Err(Error::Config("unit_effect must be in [0, 1]".into()));
        }
        if self.n_units == Some(0) || self.n_periods == Some(0) {
            return Err(Error::Config("key cardinalities must be positive".into()));
        }
        Ok(())
    }
}

/// Seeded draw from the toy population described by `spec`.
pub fn generate_toy_dataset(spec: &ToySpec, seed_value: u64) -> Result<RawTable> {
    spec.validate()?;
    let n = spec.n_rows;
    let mut rng = seed::derived_rng(seed_value, "toy/rows", 0);
    let mut unit_rng = seed::derived_rng(seed_value, "toy/units", 0);
    let unit_levels: Vec<f64> = (0..spec.n_units.unwrap_or(1))
        .map(|_| StandardNormal.sample(&mut unit_rng))
        .collect();
    let cat_biases: Vec<Vec<f64>> = spec
        .categorical
        .iter()
        .map(|c| (0..c.n_categories).map(|_| 0.5 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut unit_rng)).collect())
        .collect();

    let mut units = Vec::with_capacity(n);
    let mut periods = Vec::with_capacity(n);
    let mut numeric: Vec<Vec<f64>> = vec![Vec::with_capacity(n); spec.numeric.len()];
    let mut categorical: Vec<Vec<u32>> = vec![Vec::with_capacity(n); spec.categorical.len()];
    for _ in 0..n {
        let unit = spec.n_units.map_or(0, |k| rng.gen_range(0..k));
        let period = spec.n_periods.map_or(0, |k| rng.gen_range(0..k));
        let g: f64 = StandardNormal.sample(&mut rng);
        let s = spec.unit_effect;
        let factor = if spec.n_units.is_some() {
            (1.0 - s).sqrt() * g + s.sqrt() * unit_levels[unit]
        } else {
            g
        };
        let time = match spec.n_periods {
            Some(k) if k > 1 => period as f64 / (k - 1) as f64,
            _ => 0.0,
        };
        for (col, ns) in numeric.iter_mut().zip(&spec.numeric) {
            let e: f64 = StandardNormal.sample(&mut rng);
            let z = ns.loading * factor + (1.0 - ns.loading * ns.loading).sqrt() * e;
            col.push(ns.scale * (z + ns.drift * time) + ns.offset);
        }
        for ((col, cs), bias) in categorical.iter_mut().zip(&spec.categorical).zip(&cat_biases) {
            let centre = (cs.n_categories as f64 - 1.0) / 2.0;
            let logits: Vec<f64> = (0..cs.n_categories)
                .map(|c| bias[c] + cs.loading * factor * (c as f64 - centre))
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.gen_range(0.0..total);
            let mut pick = cs.n_categories - 1;
            for (c, w) in weights.iter().enumerate() {
                if u < *w {
                    pick = c;
                    break;
                }
                u -= w;
            }
            col.push(pick as u32);
        }
        units.push(unit as f64);
        periods.push(period as f64);
    }

    let range = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        ColumnKind::Numerical { min: lo, max: hi }
    };
    let mut columns = Vec::new();
    let mut data = Vec::new();
    if spec.n_units.is_some() {
        columns.push(Column {
            name: "unit_id".into(),
            kind: range(&units),
            id_role: IdRole::UnitKey,
        });
        data.push(ColumnData::Numeric(units));
    }
    if spec.n_periods.is_some() {
        columns.push(Column {
            name: "period".into(),
            kind: range(&periods),
            id_role: IdRole::TimeKey,
        });
        data.push(ColumnData::Numeric(periods));
    }
    for (i, col) in numeric.into_iter().enumerate() {
        columns.push(Column {
            name: format!("n{i}"),
            kind: range(&col),
            id_role: IdRole::None,
        });
        data.push(ColumnData::Numeric(col));
    }
    for (i, (col, cs)) in categorical.into_iter().zip(&spec.categorical).enumerate() {
        columns.push(Column {
            name: format!("c{i}"),
            kind: ColumnKind::Categorical {
                categories: (0..cs.n_categories).map(|k| format!("k{k}")).collect(),
            },
            id_role: IdRole::None,
        });
        data.push(ColumnData::Categorical(col));
    }
    RawTable::from_columns(Arc::new(TableSchema::new(columns)?), data)
}
