use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ensure_same_space, squared_view, EncodedTable};
use crate::error::{Error, Result};

/// Nearest synthetic neighbours reported per candidate.
pub const K_NEAREST: usize = 5;
/// Floor applied to `d_ref_1` before taking the ratio.
pub const RATIO_FLOOR: f64 = 1e-12;
/// Smallest KDE bandwidth in any dimension.
pub const BANDWIDTH_FLOOR: f64 = 1e-6;
/// Smallest density a KDE reports.
pub const DENSITY_FLOOR: f64 = 1e-300;

pub const DISTANCE_COLUMNS: [&str; 7] = ["d_syn_1", "d_syn_2", "d_syn_3", "d_syn_4", "d_syn_5", "d_ref_1", "ratio_syn_ref"];

/// Distances to the five nearest synthetic rows, the nearest reference row,
/// and `d_syn_1 / max(d_ref_1, 1e-12)`. One row per candidate.
pub fn distance_features(candidates: &EncodedTable, synthetic: &EncodedTable, reference: &EncodedTable) -> Result<Array2<f64>> {
    ensure_same_space(candidates, synthetic)?;
    ensure_same_space(candidates, reference)?;
    if synthetic.n_rows() < K_NEAREST {
        return Err(Error::Config(format!(
            "distance features need {K_NEAREST} synthetic rows, got {}",
            synthetic.n_rows()
        )));
    }
    if reference.n_rows() == 0 {
        return Err(Error::Config("distance features need a non-empty reference set".into()));
    }
    let rows: Vec<[f64; 7]> = (0..candidates.n_rows())
        .into_par_iter()
        .map(|i| {
            let q = candidates.row(i);
            let mut nearest = [f64::INFINITY; K_NEAREST];
            for r in synthetic.matrix.rows() {
                let d = squared_view(q, r);
                if d < nearest[K_NEAREST - 1] {
                    let pos = nearest.partition_point(|&x| x <= d);
                    nearest.copy_within(pos..K_NEAREST - 1, pos + 1);
                    nearest[pos] = d;
                }
            }
            let d_ref = reference
                .matrix
                .rows()
                .into_iter()
                .map(|r| squared_view(q, r))
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            let mut out = [0.0; 7];
            for (o, d) in out.iter_mut().zip(nearest) {
                *o = d.sqrt();
            }
            out[5] = d_ref;
            out[6] = out[0] / d_ref.max(RATIO_FLOOR);
            out
        })
        .collect();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((candidates.n_rows(), 7), flat).expect("seven columns per row"))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    Scott,
    Fixed(f64),
}

/// Gaussian product-kernel density estimate.
#[derive(Clone, Debug)]
pub struct Kde {
    points: Array2<f64>,
    bandwidth: Vec<f64>,
    log_norm: f64,
}

impl Kde {
    pub fn fit(data: &EncodedTable, rule: BandwidthRule) -> Result<Self> {
        let (n, d) = data.matrix.dim();
        if n < 10 {
            return Err(Error::Config(format!("density estimation needs at least 10 rows, got {n}")));
        }
        let bandwidth: Vec<f64> = match rule {
            BandwidthRule::Fixed(h) if h > 0.0 && h.is_finite() => vec![h; d],
            BandwidthRule::Fixed(h) => return Err(Error::Config(format!("bandwidth {h} must be positive"))),
            BandwidthRule::Scott => {
                let factor = (n as f64).powf(-1.0 / (d as f64 + 4.0));
                let mut floored = 0;
                let h = data
                    .matrix
                    .columns()
                    .into_iter()
                    .map(|c| {
                        let sd = crate::stats::std_dev(&c.to_vec());
                        let h = sd * factor;
                        if h < BANDWIDTH_FLOOR {
                            floored += 1;
                            BANDWIDTH_FLOOR
                        } else {
                            h
                        }
                    })
                    .collect();
                if floored > 0 {
                    log::warn!("{floored} degenerate dimension(s); bandwidth floored at {BANDWIDTH_FLOOR}");
                }
                h
            }
        };
        let log_norm = -(n as f64).ln()
            - bandwidth
                .iter()
                .map(|h| h.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln())
                .sum::<f64>();
        Ok(Self {
            points: data.matrix.clone(),
            bandwidth,
            log_norm,
        })
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    /// Log density at `x`, floored at `ln(1e-300)`.
    pub fn log_density(&self, x: ArrayView1<f64>) -> f64 {
        let exps: Vec<f64> = self
            .points
            .rows()
            .into_iter()
            .map(|p| {
                -0.5 * p
                    .iter()
                    .zip(x.iter())
                    .zip(&self.bandwidth)
                    .map(|((a, b), h)| {
                        let z = (a - b) / h;
                        z * z
                    })
                    .sum::<f64>()
            })
            .collect();
        (crate::stats::logsumexp(&exps) + self.log_norm).max(DENSITY_FLOOR.ln())
    }
}

/// `log p̂_syn(x) − log p̂_ref(x)` for every candidate.
pub fn domias_scores(
    candidates: &EncodedTable,
    synthetic: &EncodedTable,
    reference: &EncodedTable,
    rule: BandwidthRule,
) -> Result<Vec<f64>> {
    ensure_same_space(candidates, synthetic)?;
    ensure_same_space(candidates, reference)?;
    let syn = Kde::fit(synthetic, rule)?;
    let reference = Kde::fit(reference, rule)?;
    Ok((0..candidates.n_rows())
        .into_par_iter()
        .map(|i| {
            let x = candidates.row(i);
            syn.log_density(x) - reference.log_density(x)
        })
        .collect())
}
