//! ROC construction and TPR at a fixed FPR over pooled challenge points.

use serde::{Deserialize, Serialize};

use crate::dataset::RawTable;
use crate::error::{Error, Result};

/// Labeled membership challenge rows for one target model.
#[derive(Clone, Debug)]
pub struct ChallengeSet {
    pub target_id: usize,
    pub rows: RawTable,
    pub labels: Vec<bool>,
    /// Row indices in the source table, carried into score output.
    pub row_ids: Vec<usize>,
}

impl ChallengeSet {
    pub fn new(target_id: usize, rows: RawTable, labels: Vec<bool>, row_ids: Vec<usize>) -> Result<Self> {
        if rows.n_rows() != labels.len() || labels.len() != row_ids.len() {
            return Err(Error::Label(format!(
                "challenge has {} rows, {} labels and {} ids",
                rows.n_rows(),
                labels.len(),
                row_ids.len()
            )));
        }
        Ok(Self {
            target_id,
            rows,
            labels,
            row_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn score(&self, scores: &[f64]) -> Vec<ScoredPoint> {
        scores
            .iter()
            .zip(&self.labels)
            .zip(&self.row_ids)
            .map(|((&score, &label), &row_id)| ScoredPoint {
                target_id: self.target_id,
                row_id,
                score,
                label,
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPoint {
    pub target_id: usize,
    pub row_id: usize,
    pub score: f64,
    pub label: bool,
}

/// Scores pooled across all target models.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoredChallenges {
    pub points: Vec<ScoredPoint>,
}

impl ScoredChallenges {
    pub fn from_scores(scores: &[f64], labels: &[bool]) -> Self {
        Self {
            points: scores
                .iter()
                .zip(labels)
                .enumerate()
                .map(|(i, (&score, &label))| ScoredPoint {
                    target_id: 0,
                    row_id: i,
                    score,
                    label,
                })
                .collect(),
        }
    }

    pub fn extend(&mut self, points: impl IntoIterator<Item = ScoredPoint>) {
        self.points.extend(points);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["challenge_row_id", "score", "label"])?;
        for p in &self.points {
            w.write_record([
                p.row_id.to_string(),
                format!("{}", p.score),
                u8::from(p.label).to_string(),
            ])?;
        }
        w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut r = csv::Reader::from_reader(bytes);
        let mut points = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse_err = |m: String| Error::Parse { row, message: m };
            let get = |i: usize| rec.get(i).ok_or_else(|| parse_err(format!("missing field {i}")));
            let row_id = get(0)?.trim().parse().map_err(|e| parse_err(format!("{e}")))?;
            let score = get(1)?.trim().parse().map_err(|e| parse_err(format!("{e}")))?;
            let label = match get(2)?.trim() {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(parse_err(format!("bad label '{other}'"))),
            };
            points.push(ScoredPoint {
                target_id: 0,
                row_id,
                score,
                label,
            });
        }
        Ok(Self { points })
    }
}

fn check(points: &[ScoredPoint]) -> Result<(usize, usize)> {
    let pos = points.iter().filter(|p| p.label).count();
    let neg = points.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Label(
            "both members and non-members are required".into(),
        ));
    }
    if let Some(p) = points.iter().find(|p| !p.score.is_finite()) {
        return Err(Error::Label(format!("non-finite score {}", p.score)));
    }
    Ok((pos, neg))
}

/// Stepwise ROC for strict thresholding (`member iff score > τ`): one point
/// per distinct score, from (0,0) to (1,1).
pub fn roc_curve(scored: &ScoredChallenges) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = check(&scored.points)?;
    let mut sorted: Vec<&ScoredPoint> = scored.points.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut curve = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i].score;
        while i < sorted.len() && sorted[i].score == v {
            if sorted[i].label {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        curve.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(curve)
}

pub fn auc(curve: &[(f64, f64)]) -> f64 {
    curve
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) * 0.5)
        .sum()
}

/// Largest TPR reachable by a strict threshold whose empirical FPR stays at
/// or below `fpr_target`. No interpolation.
pub fn tpr_at_fpr(scored: &ScoredChallenges, fpr_target: f64) -> Result<f64> {
    if !(fpr_target > 0.0 && fpr_target < 1.0) {
        return Err(Error::Config(format!("fpr_target {fpr_target} not in (0,1)")));
    }
    let curve = roc_curve(scored)?;
    Ok(curve
        .iter()
        .filter(|(fpr, _)| *fpr <= fpr_target)
        .map(|&(_, tpr)| tpr)
        .fold(0.0, f64::max))
}

/// Expected TPR@FPR of a random scorer.
pub fn random_baseline(fpr_target: f64) -> Result<f64> {
    if !(fpr_target > 0.0 && fpr_target < 1.0) {
        return Err(Error::Config(format!("fpr_target {fpr_target} not in (0,1)")));
    }
    Ok(fpr_target)
}
