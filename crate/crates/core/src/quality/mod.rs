//! Fidelity and utility of synthetic tables relative to real ones.

mod forest;

pub use forest::{ForestConfig, RandomForest, Task};

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{encode, ColumnData, ColumnKind, EncodedTable, Encoding, NumericNorm, RawTable};
use crate::error::{Error, Result};
use crate::stats;

pub const DEFAULT_ALPHA_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Encoding used by [`precision_coverage`]: one-hot categoricals, numerics on
/// their original scale.
pub fn support_space(table: &RawTable) -> Result<EncodedTable> {
    encode(table, Encoding::OneHot, NumericNorm::None)
}

fn centroid_distances(of: &EncodedTable, centre: &Array1<f64>) -> Vec<f64> {
    of.matrix
        .rows()
        .into_iter()
        .map(|r| (&r - centre).mapv(|v| v * v).sum().sqrt())
        .collect()
}

/// Mean over `alphas` of the share of `inside` rows that fall in the
/// α-ball of `support` (centroid ball holding an α share of `support`).
fn ball_share(support: &EncodedTable, inside: &EncodedTable, alphas: &[f64]) -> f64 {
    let centre = support.matrix.mean_axis(Axis(0)).expect("non-empty");
    let mut radii = centroid_distances(support, &centre);
    radii.sort_by(f64::total_cmp);
    let d = centroid_distances(inside, &centre);
    alphas
        .iter()
        .map(|&a| {
            let r = stats::quantile_lower(&radii, a);
            d.iter().filter(|&&v| v <= r).count() as f64 / d.len() as f64
        })
        .sum::<f64>()
        / alphas.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionCoverage {
    pub alpha_precision: f64,
    pub beta_coverage: f64,
}

/// Simplified α-precision / β-coverage with centroid balls. Precision is the
/// share of synthetic rows inside the real α-balls, coverage the share of
/// real rows inside the synthetic ones, both averaged over `alphas`.
pub fn precision_coverage(synthetic: &EncodedTable, real: &EncodedTable, alphas: &[f64]) -> Result<PrecisionCoverage> {
    crate::dataset::ensure_same_space(synthetic, real)?;
    if synthetic.n_rows() < 20 || real.n_rows() < 20 {
        return Err(Error::Metric("precision/coverage needs at least 20 rows per set".into()));
    }
    if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(Error::Metric("alpha grid values must lie in (0, 1)".into()));
    }
    let first = real.row(0);
    if real.matrix.rows().into_iter().all(|r| r == first) {
        return Err(Error::Metric("real set is degenerate (all rows identical)".into()));
    }
    Ok(PrecisionCoverage {
        alpha_precision: ball_share(real, synthetic, alphas),
        beta_coverage: ball_share(synthetic, real, alphas),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalStats {
    /// Mean KS statistic over numeric features; absent without any.
    pub avg_ks: Option<f64>,
    /// Mean TVD over categorical features; absent without any.
    pub avg_tvd: Option<f64>,
}

fn check_schema(a: &RawTable, b: &RawTable) -> Result<()> {
    if a.schema() != b.schema() {
        return Err(Error::Metric("tables do not share a schema".into()));
    }
    Ok(())
}

fn mean_of(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| stats::mean(v))
}

pub fn marginal_stats(synthetic: &RawTable, real: &RawTable) -> Result<MarginalStats> {
    check_schema(synthetic, real)?;
    let schema = real.schema();
    let mut ks = Vec::new();
    let mut tvd = Vec::new();
    for c in schema.feature_indices() {
        match (real.column(c), synthetic.column(c)) {
            (ColumnData::Numeric(r), ColumnData::Numeric(s)) => ks.push(stats::ks_statistic(s, r)),
            (ColumnData::Categorical(r), ColumnData::Categorical(s)) => {
                let k = schema.columns[c].categories().map_or(0, <[String]>::len);
                tvd.push(stats::tvd(s, r, k));
            }
            _ => unreachable!("shared schema"),
        }
    }
    Ok(MarginalStats {
        avg_ks: mean_of(&ks),
        avg_tvd: mean_of(&tvd),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DependencyStats {
    /// Frobenius norm of the Pearson-matrix difference over numeric features.
    pub corr_diff: Option<f64>,
    /// Frobenius norm of the pairwise MI-matrix difference.
    pub mi_diff: Option<f64>,
}

/// Pearson matrix over the numeric feature columns.
pub fn correlation_matrix(table: &RawTable) -> Vec<Vec<f64>> {
    let schema = table.schema();
    let cols: Vec<&[f64]> = schema
        .numeric_indices()
        .into_iter()
        .map(|c| table.numeric(c).expect("numeric column"))
        .collect();
    stats::correlation_matrix(&cols)
}

/// Pairwise MI matrix over categorical features, plus numeric features
/// discretized into 20 equal-width bins over the schema range when
/// `include_numeric` is set.
pub fn mi_matrix(table: &RawTable, include_numeric: bool) -> Vec<Vec<f64>> {
    let schema = table.schema();
    let mut owned: Vec<(Vec<u32>, usize)> = Vec::new();
    for c in schema.feature_indices() {
        match (&schema.columns[c].kind, table.column(c)) {
            (ColumnKind::Categorical { categories }, ColumnData::Categorical(v)) => {
                owned.push((v.clone(), categories.len()))
            }
            (ColumnKind::Numerical { min, max }, ColumnData::Numeric(v)) if include_numeric => {
                owned.push((stats::bin_equal_width(v, *min, *max, 20), 20))
            }
            _ => {}
        }
    }
    let refs: Vec<(&[u32], usize)> = owned.iter().map(|(v, k)| (v.as_slice(), *k)).collect();
    stats::mi_matrix(&refs)
}

pub fn dependency_stats(synthetic: &RawTable, real: &RawTable, include_numeric_in_mi: bool) -> Result<DependencyStats> {
    check_schema(synthetic, real)?;
    let schema = real.schema();
    let corr_diff = (schema.numeric_indices().len() >= 2)
        .then(|| stats::frobenius_diff(&correlation_matrix(synthetic), &correlation_matrix(real)));
    let mi_cols = schema.categorical_indices().len()
        + if include_numeric_in_mi { schema.numeric_indices().len() } else { 0 };
    let mi_diff = (mi_cols >= 2).then(|| {
        stats::frobenius_diff(
            &mi_matrix(synthetic, include_numeric_in_mi),
            &mi_matrix(real, include_numeric_in_mi),
        )
    });
    Ok(DependencyStats { corr_diff, mi_diff })
}

/// Predictors for column `target`: every other feature, numerics as-is and
/// categoricals as codes.
fn design(table: &RawTable, target: usize) -> Array2<f64> {
    let feats: Vec<usize> = table
        .schema()
        .feature_indices()
        .into_iter()
        .filter(|&c| c != target)
        .collect();
    let mut x = Array2::zeros((table.n_rows(), feats.len().max(1)));
    for (j, &c) in feats.iter().enumerate() {
        match table.column(c) {
            ColumnData::Numeric(v) => x.column_mut(j).iter_mut().zip(v).for_each(|(d, s)| *d = *s),
            ColumnData::Categorical(v) => x.column_mut(j).iter_mut().zip(v).for_each(|(d, s)| *d = *s as f64),
        }
    }
    x
}

fn target_values(table: &RawTable, c: usize) -> Vec<f64> {
    match table.column(c) {
        ColumnData::Numeric(v) => v.clone(),
        ColumnData::Categorical(v) => v.iter().map(|&x| x as f64).collect(),
    }
}

pub fn r2(truth: &[f64], pred: &[f64]) -> Option<f64> {
    let m = stats::mean(truth);
    let ss_tot: f64 = truth.iter().map(|t| (t - m) * (t - m)).sum();
    if ss_tot <= 0.0 {
        return None;
    }
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Some(1.0 - ss_res / ss_tot)
}

/// Macro F1 over the classes present in either `truth` or `pred`.
pub fn macro_f1(truth: &[f64], pred: &[f64], n_classes: usize) -> f64 {
    let mut tp = vec![0.0; n_classes];
    let mut fp = vec![0.0; n_classes];
    let mut fn_ = vec![0.0; n_classes];
    for (&t, &p) in truth.iter().zip(pred) {
        let (t, p) = (t as usize, p as usize);
        if t == p {
            tp[t] += 1.0;
        } else {
            fp[p] += 1.0;
            fn_[t] += 1.0;
        }
    }
    let scores: Vec<f64> = (0..n_classes)
        .filter(|&c| tp[c] + fp[c] + fn_[c] > 0.0)
        .map(|c| 2.0 * tp[c] / (2.0 * tp[c] + fp[c] + fn_[c]))
        .collect();
    mean_of(&scores).unwrap_or(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlEfficacy {
    /// `avg R²(synthetic) − avg R²(real)` over numeric targets.
    pub delta_r2: Option<f64>,
    /// `avg F1(synthetic) − avg F1(real)` over categorical targets.
    pub delta_f1: Option<f64>,
}

/// Predicts each feature from the others with random forests trained on
/// synthetic and on real training rows, scored on `holdout_eval`.
pub fn ml_efficacy(
    synthetic: &RawTable,
    train: &RawTable,
    holdout_eval: &RawTable,
    forest: &ForestConfig,
    seed_value: u64,
) -> Result<MlEfficacy> {
    check_schema(synthetic, train)?;
    check_schema(synthetic, holdout_eval)?;
    if synthetic.is_empty() || train.is_empty() || holdout_eval.is_empty() {
        return Err(Error::Metric("ml efficacy needs non-empty tables".into()));
    }
    let schema = train.schema();
    let mut r2_syn = Vec::new();
    let mut r2_real = Vec::new();
    let mut f1_syn = Vec::new();
    let mut f1_real = Vec::new();
    for (k, c) in schema.feature_indices().into_iter().enumerate() {
        let truth = target_values(holdout_eval, c);
        let x_eval = design(holdout_eval, c);
        let column_seed = crate::seed::derive(seed_value, "quality/mle", k as u64);
        let fit = |table: &RawTable, task: Task| {
            RandomForest::fit(&design(table, c), &target_values(table, c), task, forest, column_seed)
                .predict(&x_eval)
        };
        match &schema.columns[c].kind {
            ColumnKind::Numerical { .. } => {
                let Some(a) = r2(&truth, &fit(synthetic, Task::Regression)) else {
                    log::warn!("column '{}' is constant in the evaluation set; skipped", schema.columns[c].name);
                    continue;
                };
                let b = r2(&truth, &fit(train, Task::Regression)).expect("same truth");
                r2_syn.push(a);
                r2_real.push(b);
            }
            ColumnKind::Categorical { categories } => {
                if truth.iter().all(|&t| t == truth[0]) {
                    log::warn!("column '{}' is constant in the evaluation set; skipped", schema.columns[c].name);
                    continue;
                }
                let task = Task::Classification {
                    n_classes: categories.len(),
                };
                f1_syn.push(macro_f1(&truth, &fit(synthetic, task), categories.len()));
                f1_real.push(macro_f1(&truth, &fit(train, task), categories.len()));
            }
        }
    }
    let delta = |a: &[f64], b: &[f64]| Some(mean_of(a)? - mean_of(b)?);
    Ok(MlEfficacy {
        delta_r2: delta(&r2_syn, &r2_real),
        delta_f1: delta(&f1_syn, &f1_real),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub alpha_precision: f64,
    pub beta_coverage: f64,
    /// Always "simplified_centroid_ball".
    pub precision_coverage_method: String,
    pub avg_ks: Option<f64>,
    pub avg_tvd: Option<f64>,
    pub corr_diff: Option<f64>,
    pub mi_diff: Option<f64>,
    pub delta_r2: Option<f64>,
    pub delta_f1: Option<f64>,
    pub holdout_fingerprint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityConfig {
    pub alpha_grid: Vec<f64>,
    pub include_numeric_in_mi: bool,
    pub forest: ForestConfig,
    /// Skip the forests entirely.
    pub ml_efficacy: bool,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            alpha_grid: DEFAULT_ALPHA_GRID.to_vec(),
            include_numeric_in_mi: true,
            forest: ForestConfig::default(),
            ml_efficacy: true,
        }
    }
}

/// Full quality suite. Fidelity statistics compare `synthetic` with
/// `train`; forests are scored on `holdout_eval`.
pub fn quality_report(
    synthetic: &RawTable,
    train: &RawTable,
    holdout_eval: &RawTable,
    cfg: &QualityConfig,
    seed_value: u64,
) -> Result<QualityReport> {
    let pc = precision_coverage(&support_space(synthetic)?, &support_space(train)?, &cfg.alpha_grid)?;
    let m = marginal_stats(synthetic, train)?;
    let d = dependency_stats(synthetic, train, cfg.include_numeric_in_mi)?;
    let mle = if cfg.ml_efficacy {
        ml_efficacy(synthetic, train, holdout_eval, &cfg.forest, seed_value)?
    } else {
        MlEfficacy {
            delta_r2: None,
            delta_f1: None,
        }
    };
    Ok(QualityReport {
        alpha_precision: pc.alpha_precision,
        beta_coverage: pc.beta_coverage,
        precision_coverage_method: "simplified_centroid_ball".into(),
        avg_ks: m.avg_ks,
        avg_tvd: m.avg_tvd,
        corr_diff: d.corr_diff,
        mi_diff: d.mi_diff,
        delta_r2: mle.delta_r2,
        delta_f1: mle.delta_f1,
        holdout_fingerprint: holdout_eval.fingerprint(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{generate_toy_dataset, ToySpec};
    use rand::seq::SliceRandom;

    fn toy(n: usize, seed_value: u64) -> RawTable {
        generate_toy_dataset(&ToySpec::berka_like(n), seed_value).unwrap()
    }

    #[test]
    fn self_comparison_is_near_alpha_mean() {
        let t = support_space(&toy(1000, 1)).unwrap();
        let pc = precision_coverage(&t, &t, &DEFAULT_ALPHA_GRID).unwrap();
        assert!((pc.alpha_precision - 0.5).abs() < 0.05, "{pc:?}");
        assert!((pc.beta_coverage - 0.5).abs() < 0.05, "{pc:?}");
    }

    #[test]
    fn shifted_and_collapsed_synthetic() {
        let real = support_space(&toy(1000, 2)).unwrap();
        let mut far = real.clone();
        far.matrix.mapv_inplace(|v| v + 1e7);
        assert_eq!(precision_coverage(&far, &real, &DEFAULT_ALPHA_GRID).unwrap().alpha_precision, 0.0);
        let collapsed = real.select_rows(&vec![0; 1000]);
        let pc = precision_coverage(&collapsed, &real, &DEFAULT_ALPHA_GRID).unwrap();
        assert!(pc.beta_coverage < 0.2, "{pc:?}");
        assert!(matches!(
            precision_coverage(&real, &collapsed, &DEFAULT_ALPHA_GRID),
            Err(Error::Metric(_))
        ));
    }

    #[test]
    fn identical_tables_have_zero_divergence() {
        let t = toy(300, 3);
        let m = marginal_stats(&t, &t).unwrap();
        assert_eq!((m.avg_ks, m.avg_tvd), (Some(0.0), Some(0.0)));
        let d = dependency_stats(&t, &t, true).unwrap();
        assert_eq!((d.corr_diff, d.mi_diff), (Some(0.0), Some(0.0)));
    }

    #[test]
    fn row_order_does_not_matter() {
        let t = toy(600, 4);
        let a = t.select_rows(&(0..300).collect::<Vec<_>>());
        let b = t.select_rows(&(300..600).collect::<Vec<_>>());
        let mut order: Vec<usize> = (0..300).collect();
        order.shuffle(&mut crate::seed::rng(1));
        let b2 = b.select_rows(&order);
        assert_eq!(marginal_stats(&a, &b).unwrap(), marginal_stats(&a, &b2).unwrap());
        let d1 = dependency_stats(&a, &b, true).unwrap();
        let d2 = dependency_stats(&a, &b2, true).unwrap();
        assert!((d1.corr_diff.unwrap() - d2.corr_diff.unwrap()).abs() < 1e-12);
        assert!((d1.mi_diff.unwrap() - d2.mi_diff.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn f1_and_r2_basics() {
        assert_eq!(macro_f1(&[0.0, 1.0, 1.0], &[0.0, 1.0, 1.0], 3), 1.0);
        assert_eq!(r2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), Some(1.0));
        assert_eq!(r2(&[1.0, 1.0], &[1.0, 2.0]), None);
    }

    #[test]
    fn mle_identical_data_and_shuffled_labels() {
        let data = toy(900, 6);
        let train = data.select_rows(&(0..450).collect::<Vec<_>>());
        let eval = data.select_rows(&(450..900).collect::<Vec<_>>());
        let cfg = ForestConfig {
            n_trees: 20,
            ..ForestConfig::default()
        };
        let same = ml_efficacy(&train, &train, &eval, &cfg, 1).unwrap();
        assert!(same.delta_r2.unwrap().abs() < 1e-12 && same.delta_f1.unwrap().abs() < 1e-12);
        assert_eq!(ml_efficacy(&train, &train, &eval, &cfg, 1).unwrap(), same);

        // shuffle the most dependent categorical column
        let c0 = train.schema().index_of("c0").unwrap();
        let mut codes = train.codes(c0).unwrap().to_vec();
        codes.shuffle(&mut crate::seed::rng(2));
        let shuffled = train.with_column(c0, ColumnData::Categorical(codes)).unwrap();
        let worse = ml_efficacy(&shuffled, &train, &eval, &cfg, 1).unwrap();
        assert!(worse.delta_f1.unwrap() < 0.0, "{worse:?}");
    }
}
