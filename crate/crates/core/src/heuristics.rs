//! Distance-based privacy heuristics computed from synthetic and real rows.
//!
//! Distances live in the metric space (one-hot categoricals, numerics scaled
//! to `[-1, 1]`). None of these numbers is a membership attack; they are the
//! proxies an auditor would report alongside one.

use ndarray::ArrayView1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ensure_same_space, metric_space, ColumnData, ColumnKind, EncodedTable, RawTable};
use crate::error::{Error, Result};
use crate::stats;

fn require_rows(name: &str, table: &EncodedTable, min: usize) -> Result<()> {
    if table.n_rows() < min {
        return Err(Error::Metric(format!(
            "{name} needs at least {min} rows, got {}",
            table.n_rows()
        )));
    }
    Ok(())
}

fn weighted_sq(a: ArrayView1<f64>, b: ArrayView1<f64>, w: Option<&[f64]>) -> f64 {
    match w {
        None => a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum(),
        Some(w) => a
            .iter()
            .zip(b.iter())
            .zip(w)
            .map(|((x, y), w)| w * (x - y) * (x - y))
            .sum(),
    }
}

/// The two smallest squared distances from `q` to rows of `set`, skipping
/// row `skip`.
fn two_nearest(q: ArrayView1<f64>, set: &EncodedTable, skip: Option<usize>, w: Option<&[f64]>) -> (f64, f64) {
    let mut best = (f64::INFINITY, f64::INFINITY);
    for (i, row) in set.matrix.rows().into_iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        let d = weighted_sq(q, row, w);
        if d < best.0 {
            best = (d, best.0);
        } else if d < best.1 {
            best.1 = d;
        }
    }
    best
}

/// Fraction of synthetic rows strictly closer to a training row than to any
/// holdout row. Ties count as not closer.
pub fn dcr(synthetic: &EncodedTable, train: &EncodedTable, holdout: &EncodedTable) -> Result<f64> {
    ensure_same_space(synthetic, train)?;
    ensure_same_space(synthetic, holdout)?;
    require_rows("dcr synthetic set", synthetic, 1)?;
    require_rows("dcr train set", train, 1)?;
    require_rows("dcr holdout set", holdout, 1)?;
    let closer = (0..synthetic.n_rows())
        .into_par_iter()
        .filter(|&i| {
            let s = synthetic.row(i);
            two_nearest(s, train, None, None).0 < two_nearest(s, holdout, None, None).0
        })
        .count();
    Ok(closer as f64 / synthetic.n_rows() as f64)
}

/// `|train| / (|train| + |holdout|)`, the value of `dcr` for synthetic data
/// independent of both sets.
pub fn dcr_ideal(n_train: usize, n_holdout: usize) -> f64 {
    n_train as f64 / (n_train + n_holdout) as f64
}

fn mean_nndr(synthetic: &EncodedTable, real: &EncodedTable) -> f64 {
    let total: f64 = (0..synthetic.n_rows())
        .into_par_iter()
        .map(|i| {
            let (d1, d2) = two_nearest(synthetic.row(i), real, None, None);
            if d2 == 0.0 {
                1.0
            } else {
                (d1 / d2).sqrt()
            }
        })
        .sum();
    total / synthetic.n_rows() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nndr {
    /// `1 − mean(d1/d2)` against the training set.
    pub one_minus_nndr: f64,
    /// `(1 − NNDR_train) − (1 − NNDR_holdout)`.
    pub privacy_loss: f64,
}

/// Nearest-neighbor distance ratio of synthetic rows. A row with two
/// neighbors at distance 0 has ratio 1.
pub fn nndr(synthetic: &EncodedTable, train: &EncodedTable, holdout: &EncodedTable) -> Result<Nndr> {
    ensure_same_space(synthetic, train)?;
    ensure_same_space(synthetic, holdout)?;
    require_rows("nndr synthetic set", synthetic, 1)?;
    require_rows("nndr train set", train, 2)?;
    require_rows("nndr holdout set", holdout, 2)?;
    let t = 1.0 - mean_nndr(synthetic, train);
    let h = 1.0 - mean_nndr(synthetic, holdout);
    Ok(Nndr {
        one_minus_nndr: t,
        privacy_loss: t - h,
    })
}

/// Fraction of real rows hit by some synthetic row: every numeric feature
/// within `threshold_pct` percent of the column's schema range and every
/// categorical feature equal. Identifier columns are ignored.
pub fn hitting_rate(synthetic: &RawTable, real: &RawTable, threshold_pct: f64) -> Result<f64> {
    if !(threshold_pct > 0.0) {
        return Err(Error::Metric(format!("threshold {threshold_pct} must be positive")));
    }
    if synthetic.schema() != real.schema() {
        return Err(Error::Metric("hitting rate needs a shared schema".into()));
    }
    if synthetic.is_empty() || real.is_empty() {
        return Err(Error::Metric("hitting rate needs non-empty tables".into()));
    }
    let schema = real.schema();
    let cols = schema.feature_indices();
    let tolerances: Vec<Option<f64>> = cols
        .iter()
        .map(|&c| match schema.columns[c].kind {
            ColumnKind::Numerical { min, max } => Some(threshold_pct / 100.0 * (max - min)),
            ColumnKind::Categorical { .. } => None,
        })
        .collect();
    let matches = |s: usize, r: usize| {
        cols.iter().zip(&tolerances).all(|(&c, tol)| match (real.column(c), synthetic.column(c)) {
            (ColumnData::Numeric(rv), ColumnData::Numeric(sv)) => {
                (rv[r] - sv[s]).abs() <= tol.expect("numeric column has a tolerance")
            }
            (ColumnData::Categorical(rv), ColumnData::Categorical(sv)) => rv[r] == sv[s],
            _ => false,
        })
    };
    let hits = (0..real.n_rows())
        .into_par_iter()
        .filter(|&r| (0..synthetic.n_rows()).any(|s| matches(s, r)))
        .count();
    Ok(hits as f64 / real.n_rows() as f64)
}

/// Inverse-entropy weight for every feature column of `real`. Numeric
/// entropy comes from a 20-bin equal-width histogram over the schema range.
/// Columns with zero entropy get `10 ×` the median finite weight.
pub fn entropy_weights(real: &RawTable) -> Vec<f64> {
    let schema = real.schema();
    let raw: Vec<f64> = schema
        .feature_indices()
        .into_iter()
        .map(|c| {
            let h = match (&schema.columns[c].kind, real.column(c)) {
                (ColumnKind::Numerical { min, max }, ColumnData::Numeric(v)) => {
                    stats::entropy(&stats::bin_equal_width(v, *min, *max, 20), 20)
                }
                (ColumnKind::Categorical { categories }, ColumnData::Categorical(v)) => {
                    stats::entropy(v, categories.len())
                }
                _ => 0.0,
            };
            if h > 0.0 {
                1.0 / h
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let mut finite: Vec<f64> = raw.iter().copied().filter(|w| w.is_finite()).collect();
    finite.sort_by(f64::total_cmp);
    let median = if finite.is_empty() {
        1.0
    } else if finite.len() % 2 == 1 {
        finite[finite.len() / 2]
    } else {
        0.5 * (finite[finite.len() / 2 - 1] + finite[finite.len() / 2])
    };
    let cap = 10.0 * median;
    raw.into_iter()
        .map(|w| {
            if w.is_finite() {
                w.min(cap)
            } else {
                log::warn!("zero-entropy column in EIR weights; capping at {cap}");
                cap
            }
        })
        .collect()
}

/// Spreads per-column weights over the encoded coordinates of each column.
pub fn coordinate_weights(table: &EncodedTable, column_weights: &[f64]) -> Result<Vec<f64>> {
    if column_weights.len() != table.blocks.len() {
        return Err(Error::Dimension {
            expected: table.blocks.len(),
            got: column_weights.len(),
        });
    }
    let mut w = vec![0.0; table.dim()];
    for (block, &cw) in table.blocks.iter().zip(column_weights) {
        w[block.range()].iter_mut().for_each(|x| *x = cw);
    }
    Ok(w)
}

fn eir_rate(synthetic: &EncodedTable, real: &EncodedTable, w: &[f64]) -> f64 {
    let hits = (0..real.n_rows())
        .into_par_iter()
        .filter(|&i| {
            let q = real.row(i);
            let ds = two_nearest(q, synthetic, None, Some(w)).0;
            let dr = two_nearest(q, real, Some(i), Some(w)).0;
            ds <= dr
        })
        .count();
    hits as f64 / real.n_rows() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eir {
    pub eir_train: f64,
    /// `eir_train − eir_holdout`.
    pub eir_diff: f64,
}

/// Share of real rows whose nearest neighbor among synthetic rows and the
/// other rows of the same real set is synthetic, under the weighted
/// distance `Σ w_f (x_f − y_f)²`. A tie counts as synthetic.
pub fn eir(
    synthetic: &EncodedTable,
    train: &EncodedTable,
    holdout: &EncodedTable,
    coordinate_weights: &[f64],
) -> Result<Eir> {
    ensure_same_space(synthetic, train)?;
    ensure_same_space(synthetic, holdout)?;
    require_rows("eir synthetic set", synthetic, 1)?;
    require_rows("eir train set", train, 2)?;
    require_rows("eir holdout set", holdout, 2)?;
    if coordinate_weights.len() != synthetic.dim() {
        return Err(Error::Dimension {
            expected: synthetic.dim(),
            got: coordinate_weights.len(),
        });
    }
    let t = eir_rate(synthetic, train, coordinate_weights);
    let h = eir_rate(synthetic, holdout, coordinate_weights);
    Ok(Eir {
        eir_train: t,
        eir_diff: t - h,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeuristicReport {
    pub dcr: f64,
    pub dcr_ideal: f64,
    pub one_minus_nndr: f64,
    pub nndr_privacy_loss: f64,
    pub hitting_rate: f64,
    pub eir_train: f64,
    pub eir_diff: f64,
    pub hr_threshold_pct: f64,
    pub distance_space: String,
}

pub const DEFAULT_HR_THRESHOLD_PCT: f64 = 3.0;

/// All heuristics for one synthetic set. The hitting rate is taken against
/// the training rows; EIR weights come from train ∪ holdout.
pub fn heuristic_report(
    synthetic: &RawTable,
    train: &RawTable,
    holdout: &RawTable,
    hr_threshold_pct: f64,
) -> Result<HeuristicReport> {
    let s = metric_space(synthetic)?;
    let t = metric_space(train)?;
    let h = metric_space(holdout)?;
    let weights = coordinate_weights(&t, &entropy_weights(&train.concat(holdout)?))?;
    let n = nndr(&s, &t, &h)?;
    let e = eir(&s, &t, &h, &weights)?;
    Ok(HeuristicReport {
        dcr: dcr(&s, &t, &h)?,
        dcr_ideal: dcr_ideal(t.n_rows(), h.n_rows()),
        one_minus_nndr: n.one_minus_nndr,
        nndr_privacy_loss: n.privacy_loss,
        hitting_rate: hitting_rate(synthetic, train, hr_threshold_pct)?,
        eir_train: e.eir_train,
        eir_diff: e.eir_diff,
        hr_threshold_pct,
        distance_space: "one_hot+minmax_pm1".into(),
    })
}
