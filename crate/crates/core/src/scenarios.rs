//! Attacker-data mismatch scenarios and the divergence report that
//! quantifies how far attacker data drifts from the target population.

use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnData, ColumnKind, IdRole, RawTable};
use crate::error::{Error, Result};
use crate::seed;
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MismatchKind {
    DisjointUnits,
    DisjointTime,
    PermuteMarginals,
    UniformNoise,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MismatchSpec {
    pub kind: MismatchKind,
    #[serde(default = "half")]
    pub fraction_numeric: f64,
    #[serde(default = "half")]
    pub fraction_categorical: f64,
    /// Rows with time key below the cutoff belong to the target side. The
    /// median time key is used when unset.
    #[serde(default)]
    pub time_cutoff: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn half() -> f64 {
    0.5
}

impl MismatchSpec {
    pub fn new(kind: MismatchKind, seed_value: u64) -> Self {
        Self {
            kind,
            fraction_numeric: 0.5,
            fraction_categorical: 0.5,
            time_cutoff: None,
            seed: seed_value,
        }
    }

    pub fn validate(&self, table: &RawTable) -> Result<()> {
        for f in [self.fraction_numeric, self.fraction_categorical] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Scenario(format!("fraction {f} not in [0, 1]")));
            }
        }
        let need = match self.kind {
            MismatchKind::DisjointUnits => Some(IdRole::UnitKey),
            MismatchKind::DisjointTime => Some(IdRole::TimeKey),
            _ => None,
        };
        if let Some(role) = need {
            if table.schema().role_index(role).is_none() {
                return Err(Error::Scenario(format!("{:?} needs a {role:?} column", self.kind)));
            }
        }
        Ok(())
    }

    /// Whether the scenario splits the population rather than corrupting
    /// attacker rows.
    pub fn is_partition(&self) -> bool {
        matches!(self.kind, MismatchKind::DisjointUnits | MismatchKind::DisjointTime)
    }
}

/// Row indices of the target side and the attacker side for the disjoint
/// scenarios. Units are assigned to sides by a seeded half split; time
/// splits at the cutoff with later rows on the attacker side.
pub fn partition_by_key(table: &RawTable, spec: &MismatchSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    spec.validate(table)?;
    let key_values = |role: IdRole| -> &[f64] {
        let c = table.schema().role_index(role).expect("validated");
        table.numeric(c).ok_or(()).unwrap_or(&[])
    };
    let key_codes = |role: IdRole| -> Option<&[u32]> {
        let c = table.schema().role_index(role).expect("validated");
        table.codes(c)
    };
    let n = table.n_rows();
    match spec.kind {
        MismatchKind::DisjointUnits => {
            // unit identity as a bit pattern so numeric and categorical keys share a path
            let ids: Vec<u64> = match key_codes(IdRole::UnitKey) {
                Some(codes) => codes.iter().map(|&c| c as u64).collect(),
                None => key_values(IdRole::UnitKey).iter().map(|v| v.to_bits()).collect(),
            };
            let mut units: Vec<u64> = ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
            units.shuffle(&mut seed::derived_rng(spec.seed, "scenario/units", 0));
            let attacker_units: BTreeSet<u64> = units[units.len() / 2..].iter().copied().collect();
            Ok((0..n).partition(|&i| !attacker_units.contains(&ids[i])))
        }
        MismatchKind::DisjointTime => {
            let times: Vec<f64> = match key_codes(IdRole::TimeKey) {
                Some(codes) => codes.iter().map(|&c| c as f64).collect(),
                None => key_values(IdRole::TimeKey).to_vec(),
            };
            let cutoff = spec.time_cutoff.unwrap_or_else(|| {
                let mut s = times.clone();
                s.sort_by(f64::total_cmp);
                stats::quantile_lower(&s, 0.5)
            });
            Ok((0..n).partition(|&i| times[i] < cutoff))
        }
        _ => Err(Error::Scenario(format!("{:?} is not a partition scenario", spec.kind))),
    }
}

fn pick_columns(cols: &[usize], fraction: f64, rng: &mut seed::Rng) -> Vec<usize> {
    let k = ((fraction * cols.len() as f64).ceil() as usize).min(cols.len());
    let mut picked: Vec<usize> = index::sample(rng, cols.len(), k).into_iter().map(|i| cols[i]).collect();
    picked.sort_unstable();
    picked
}

/// Transforms attacker data according to `spec`. The disjoint scenarios
/// return the attacker-side partition.
pub fn apply_mismatch(table: &RawTable, spec: &MismatchSpec) -> Result<RawTable> {
    spec.validate(table)?;
    let schema = table.schema();
    match spec.kind {
        MismatchKind::DisjointUnits | MismatchKind::DisjointTime => {
            let (_, attacker) = partition_by_key(table, spec)?;
            Ok(table.select_rows(&attacker))
        }
        MismatchKind::PermuteMarginals => {
            let mut out = table.clone();
            for (k, c) in schema.feature_indices().into_iter().enumerate() {
                let mut rng = seed::derived_rng(spec.seed, "scenario/permute", k as u64);
                let data = match table.column(c) {
                    ColumnData::Numeric(v) => {
                        let mut v = v.clone();
                        v.shuffle(&mut rng);
                        ColumnData::Numeric(v)
                    }
                    ColumnData::Categorical(v) => {
                        let mut v = v.clone();
                        v.shuffle(&mut rng);
                        ColumnData::Categorical(v)
                    }
                };
                out = out.with_column(c, data)?;
            }
            Ok(out)
        }
        MismatchKind::UniformNoise => {
            let mut rng = seed::derived_rng(spec.seed, "scenario/noise-columns", 0);
            let mut cols = pick_columns(&schema.numeric_indices(), spec.fraction_numeric, &mut rng);
            cols.extend(pick_columns(&schema.categorical_indices(), spec.fraction_categorical, &mut rng));
            let mut out = table.clone();
            for c in cols {
                let mut rng = seed::derived_rng(spec.seed, "scenario/noise", c as u64);
                let n = table.n_rows();
                let data = match &schema.columns[c].kind {
                    ColumnKind::Numerical { min, max } => ColumnData::Numeric(
                        (0..n)
                            .map(|_| if max > min { rng.gen_range(*min..=*max) } else { *min })
                            .collect(),
                    ),
                    ColumnKind::Categorical { categories } => {
                        let k = categories.len() as u32;
                        ColumnData::Categorical((0..n).map(|_| rng.gen_range(0..k)).collect())
                    }
                };
                out = out.with_column(c, data)?;
            }
            Ok(out)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnTest {
    pub name: String,
    /// "ks" or "tvd".
    pub test: String,
    pub statistic: f64,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub corr_delta: f64,
    pub mi_delta: f64,
    pub pct_marginals_differing: f64,
    pub per_column: Vec<ColumnTest>,
}

/// Permutation p-value for the TVD between two categorical samples:
/// `(1 + #{permuted ≥ observed}) / (1 + n_permutations)`.
pub fn tvd_permutation_test(a: &[u32], b: &[u32], k: usize, n_permutations: usize, seed_value: u64) -> (f64, f64) {
    let observed = stats::tvd(a, b, k);
    let pooled: Vec<u32> = a.iter().chain(b).copied().collect();
    let count = (0..n_permutations)
        .into_par_iter()
        .filter(|&p| {
            let mut rng = seed::derived_rng(seed_value, "scenario/tvd-perm", p as u64);
            let mut v = pooled.clone();
            v.shuffle(&mut rng);
            let (x, y) = v.split_at(a.len());
            stats::tvd(x, y, k) >= observed
        })
        .count();
    (observed, (1 + count) as f64 / (1 + n_permutations) as f64)
}

/// Marginal tests per feature column plus correlation (numeric pairs) and
/// mutual-information (categorical pairs) matrix differences.
pub fn divergence(a: &RawTable, b: &RawTable, alpha: f64, n_permutations: usize, seed_value: u64) -> Result<DivergenceReport> {
    if a.schema() != b.schema() {
        return Err(Error::Scenario("divergence needs identical schemas".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Scenario(format!("alpha {alpha} not in (0, 1)")));
    }
    let schema = a.schema();
    let mut per_column = Vec::new();
    for (k, c) in schema.feature_indices().into_iter().enumerate() {
        let col = &schema.columns[c];
        let (test, statistic, p_value) = match (a.column(c), b.column(c)) {
            (ColumnData::Numeric(x), ColumnData::Numeric(y)) => {
                let d = stats::ks_statistic(x, y);
                ("ks", d, stats::ks_p_value(d, x.len(), y.len()))
            }
            (ColumnData::Categorical(x), ColumnData::Categorical(y)) => {
                let cats = col.categories().map_or(0, <[String]>::len);
                let (t, p) = tvd_permutation_test(x, y, cats, n_permutations, seed::derive(seed_value, "scenario/tvd", k as u64));
                ("tvd", t, p)
            }
            _ => unreachable!("identical schemas"),
        };
        per_column.push(ColumnTest {
            name: col.name.clone(),
            test: test.into(),
            statistic,
            p_value,
            significant: p_value < alpha,
        });
    }
    let significant = per_column.iter().filter(|c| c.significant).count();
    let pct = if per_column.is_empty() {
        0.0
    } else {
        100.0 * significant as f64 / per_column.len() as f64
    };
    Ok(DivergenceReport {
        corr_delta: stats::frobenius_diff(&crate::quality::correlation_matrix(a), &crate::quality::correlation_matrix(b)),
        mi_delta: stats::frobenius_diff(&crate::quality::mi_matrix(a, false), &crate::quality::mi_matrix(b, false)),
        pct_marginals_differing: pct,
        per_column,
    })
}
