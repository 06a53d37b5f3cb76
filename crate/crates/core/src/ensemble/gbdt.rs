use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::sigmoid;
use crate::seed;

pub const MAX_BINS: usize = 64;
pub const REG_ALPHA_CHOICES: [f64; 6] = [0.0, 0.1, 0.5, 1.0, 5.0, 10.0];
pub const REG_LAMBDA_CHOICES: [f64; 7] = [0.0, 0.1, 0.5, 1.0, 5.0, 10.0, 100.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub eta: f64,
    pub subsample: f64,
    pub colsample: f64,
    pub reg_alpha: f64,
    pub reg_lambda: f64,
    pub min_child_weight: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 6,
            eta: 0.1,
            subsample: 1.0,
            colsample: 1.0,
            reg_alpha: 0.0,
            reg_lambda: 1.0,
            min_child_weight: 1.0,
        }
    }
}

impl GbdtParams {
    /// Draws a configuration from the search ranges: log-uniform `eta` in
    /// `[1e-4, 0.1]`, depth 3..=10, `subsample` in `[0.1, 1]`, `colsample` in
    /// `[0.5, 1]`, and the listed regularization choices.
    pub fn sample<R: Rng>(rng: &mut R, n_trees: usize) -> Self {
        Self {
            n_trees,
            max_depth: rng.gen_range(3..=10),
            eta: rng.gen_range(1e-4f64.ln()..=0.1f64.ln()).exp(),
            subsample: rng.gen_range(0.1..=1.0),
            colsample: rng.gen_range(0.5..=1.0),
            reg_alpha: *REG_ALPHA_CHOICES.choose(rng).expect("non-empty"),
            reg_lambda: *REG_LAMBDA_CHOICES.choose(rng).expect("non-empty"),
            min_child_weight: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.max_depth >= 1
            && self.eta > 0.0
            && (0.0..=1.0).contains(&self.subsample)
            && self.subsample > 0.0
            && (0.0..=1.0).contains(&self.colsample)
            && self.colsample > 0.0
            && self.reg_alpha >= 0.0
            && self.reg_lambda >= 0.0
            && self.min_child_weight >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid boosting parameters {self:?}")))
        }
    }
}

/// A fitted regression tree over raw feature values; `x ≤ threshold` goes
/// left. Leaf values already include the learning rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
    },
}

impl TreeNode {
    pub fn predict(&self, x: ArrayView1<f64>) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gbdt {
    pub params: GbdtParams,
    pub n_features: usize,
    pub base_margin: f64,
    pub trees: Vec<TreeNode>,
}

/// Up to 63 quantile cut points per feature.
fn bin_edges(x: ArrayView2<f64>) -> Vec<Vec<f64>> {
    x.columns()
        .into_iter()
        .map(|c| {
            let mut v = c.to_vec();
            v.sort_by(f64::total_cmp);
            let max = v[v.len() - 1];
            let mut edges: Vec<f64> = (1..MAX_BINS)
                .map(|i| v[(i * v.len() / MAX_BINS).min(v.len() - 1)])
                .filter(|&e| e < max)
                .collect();
            edges.dedup();
            edges
        })
        .collect()
}

struct Binned {
    /// Column-major bin indices.
    bins: Vec<Vec<u8>>,
    edges: Vec<Vec<f64>>,
}

impl Binned {
    fn new(x: ArrayView2<f64>) -> Self {
        let edges = bin_edges(x);
        let bins = x
            .columns()
            .into_iter()
            .zip(&edges)
            .map(|(c, e)| c.iter().map(|v| e.partition_point(|edge| edge < v) as u8).collect())
            .collect();
        Self { bins, edges }
    }
}

fn soft_threshold(g: f64, alpha: f64) -> f64 {
    g.signum() * (g.abs() - alpha).max(0.0)
}

struct Builder<'a> {
    data: &'a Binned,
    grad: &'a [f64],
    hess: &'a [f64],
    cols: Vec<usize>,
    p: &'a GbdtParams,
}

impl Builder<'_> {
    fn leaf_weight(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.p.reg_lambda;
        if denom <= 0.0 {
            0.0
        } else {
            -soft_threshold(g, self.p.reg_alpha) / denom
        }
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.p.reg_lambda;
        if denom <= 0.0 {
            0.0
        } else {
            soft_threshold(g, self.p.reg_alpha).powi(2) / denom
        }
    }

    fn build(&self, rows: Vec<usize>, depth: usize) -> TreeNode {
        let g: f64 = rows.iter().map(|&r| self.grad[r]).sum();
        let h: f64 = rows.iter().map(|&r| self.hess[r]).sum();
        let leaf = TreeNode::Leaf {
            value: self.p.eta * self.leaf_weight(g, h),
        };
        if depth >= self.p.max_depth || rows.len() < 2 {
            return leaf;
        }
        let parent = self.score(g, h);
        let best = self
            .cols
            .par_iter()
            .filter_map(|&f| {
                let n_edges = self.data.edges[f].len();
                if n_edges == 0 {
                    return None;
                }
                let mut hg = [0.0; MAX_BINS];
                let mut hh = [0.0; MAX_BINS];
                for &r in &rows {
                    let b = self.data.bins[f][r] as usize;
                    hg[b] += self.grad[r];
                    hh[b] += self.hess[r];
                }
                let (mut gl, mut hl) = (0.0, 0.0);
                let mut best: Option<(f64, usize)> = None;
                for b in 0..n_edges {
                    gl += hg[b];
                    hl += hh[b];
                    let (gr, hr) = (g - gl, h - hl);
                    if hl < self.p.min_child_weight || hr < self.p.min_child_weight {
                        continue;
                    }
                    let gain = 0.5 * (self.score(gl, hl) + self.score(gr, hr) - parent);
                    if best.map_or(true, |(bg, _)| gain > bg) {
                        best = Some((gain, b));
                    }
                }
                best.map(|(gain, b)| (gain, f, b))
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(None, |acc: Option<(f64, usize, usize)>, c| match acc {
                Some(a) if a.0 >= c.0 => Some(a),
                _ => Some(c),
            });
        match best {
            Some((gain, f, b)) if gain > 1e-12 => {
                let (left, right): (Vec<usize>, Vec<usize>) =
                    rows.into_iter().partition(|&r| self.data.bins[f][r] as usize <= b);
                if left.is_empty() || right.is_empty() {
                    return leaf;
                }
                TreeNode::Split {
                    feature: f,
                    threshold: self.data.edges[f][b],
                    left: Box::new(self.build(left, depth + 1)),
                    right: Box::new(self.build(right, depth + 1)),
                }
            }
            _ => leaf,
        }
    }
}

fn check_labels(y: &[bool]) -> Result<()> {
    let pos = y.iter().filter(|&&v| v).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::Label("boosting needs both classes".into()));
    }
    Ok(())
}

impl Gbdt {
    /// Logistic-loss boosting with second-order leaf weights.
    pub fn fit(x: ArrayView2<f64>, y: &[bool], params: &GbdtParams, seed_value: u64) -> Result<Self> {
        params.validate()?;
        let (n, d) = x.dim();
        if n != y.len() {
            return Err(Error::Dimension { expected: n, got: y.len() });
        }
        check_labels(y)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("boosting features must be finite".into()));
        }
        let data = Binned::new(x);
        let rate = y.iter().filter(|&&v| v).count() as f64 / n as f64;
        let base_margin = (rate / (1.0 - rate)).ln();
        let mut margin = vec![base_margin; n];
        let mut trees = Vec::with_capacity(params.n_trees);
        let n_rows = ((params.subsample * n as f64).ceil() as usize).clamp(1, n);
        let n_cols = ((params.colsample * d as f64).ceil() as usize).clamp(1, d.max(1));
        for t in 0..params.n_trees {
            let mut rng = seed::derived_rng(seed_value, "gbdt/tree", t as u64);
            let mut grad = vec![0.0; n];
            let mut hess = vec![0.0; n];
            for i in 0..n {
                let p = sigmoid(margin[i]);
                grad[i] = p - if y[i] { 1.0 } else { 0.0 };
                hess[i] = (p * (1.0 - p)).max(1e-16);
            }
            let rows: Vec<usize> = index::sample(&mut rng, n, n_rows).into_vec();
            let mut cols: Vec<usize> = if d == 0 { Vec::new() } else { index::sample(&mut rng, d, n_cols).into_vec() };
            cols.sort_unstable();
            let builder = Builder {
                data: &data,
                grad: &grad,
                hess: &hess,
                cols,
                p: params,
            };
            let tree = builder.build(rows, 0);
            for (i, m) in margin.iter_mut().enumerate() {
                *m += tree.predict(x.row(i));
            }
            trees.push(tree);
        }
        Ok(Self {
            params: params.clone(),
            n_features: d,
            base_margin,
            trees,
        })
    }

    fn check(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// Log-odds of membership.
    pub fn predict_margin(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(x.rows()
            .into_iter()
            .map(|r| self.base_margin + self.trees.iter().map(|t| t.predict(r)).sum::<f64>())
            .collect())
    }

    /// Membership probabilities, kept strictly inside `(0, 1)`.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(self
            .predict_margin(x)?
            .into_iter()
            .map(|m| sigmoid(m.clamp(-30.0, 30.0)))
            .collect())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_vec_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&text)?)
    }
}

/// Mean binary cross-entropy of probabilities `p` against `y`.
pub fn log_loss(p: &[f64], y: &[bool]) -> f64 {
    let eps = 1e-15;
    p.iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(eps, 1.0 - eps);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / p.len() as f64
}

/// Fold index of every row; each class is spread round-robin over folds
/// after a seeded shuffle.
pub fn stratified_folds(y: &[bool], k: usize, seed_value: u64) -> Vec<usize> {
    let mut rng = seed::derived_rng(seed_value, "gbdt/folds", 0);
    let mut fold = vec![0; y.len()];
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        for (j, i) in idx.into_iter().enumerate() {
            fold[i] = j % k;
        }
    }
    fold
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub cv_folds: usize,
    pub hp_trials: usize,
    pub n_trees: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            cv_folds: 5,
            hp_trials: 30,
            n_trees: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub params: GbdtParams,
    pub cv_log_loss: f64,
}

/// Boosted trees selected by cross-validated random search, refit on all
/// rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaClassifier {
    pub model: Gbdt,
    pub cv_log_loss: f64,
    pub trials: Vec<Trial>,
}

/// Cross-validated log-loss of one configuration.
pub fn cross_validate(x: ArrayView2<f64>, y: &[bool], params: &GbdtParams, folds: &[usize], k: usize, seed_value: u64) -> Result<f64> {
    let mut total = 0.0;
    for f in 0..k {
        let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != f).collect();
        let test: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == f).collect();
        let xt = x.select(ndarray::Axis(0), &train);
        let yt: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let model = Gbdt::fit(xt.view(), &yt, params, seed::derive(seed_value, "gbdt/fold", f as u64))?;
        let xe = x.select(ndarray::Axis(0), &test);
        let ye: Vec<bool> = test.iter().map(|&i| y[i]).collect();
        total += log_loss(&model.predict_proba(xe.view())?, &ye) * test.len() as f64;
    }
    Ok(total / y.len() as f64)
}

pub fn train_meta(x: &Array2<f64>, y: &[bool], cfg: &SearchConfig, seed_value: u64) -> Result<MetaClassifier> {
    check_labels(y)?;
    if cfg.hp_trials == 0 || cfg.cv_folds < 2 {
        return Err(Error::Config("search needs at least one trial and two folds".into()));
    }
    for class in [true, false] {
        if y.iter().filter(|&&v| v == class).count() < cfg.cv_folds {
            return Err(Error::Label(format!("each class needs at least {} rows for cross-validation", cfg.cv_folds)));
        }
    }
    let folds = stratified_folds(y, cfg.cv_folds, seed_value);
    let mut rng = seed::derived_rng(seed_value, "gbdt/search", 0);
    let candidates: Vec<GbdtParams> = (0..cfg.hp_trials).map(|_| GbdtParams::sample(&mut rng, cfg.n_trees)).collect();
    let trials: Vec<Trial> = candidates
        .into_par_iter()
        .map(|params| {
            let cv_log_loss = cross_validate(x.view(), y, &params, &folds, cfg.cv_folds, seed_value)?;
            Ok(Trial { params, cv_log_loss })
        })
        .collect::<Result<_>>()?;
    let best = trials
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.cv_log_loss.total_cmp(&b.1.cv_log_loss).then(a.0.cmp(&b.0)))
        .map(|(_, t)| t.clone())
        .expect("at least one trial");
    let model = Gbdt::fit(x.view(), y, &best.params, seed::derive(seed_value, "gbdt/refit", 0))?;
    Ok(MetaClassifier {
        model,
        cv_log_loss: best.cv_log_loss,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, d: usize, seed_value: u64) -> (Array2<f64>, Vec<bool>) {
        let mut rng = seed::rng(seed_value);
        let x = Array2::from_shape_fn((n, d), |_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng));
        let y = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        (x, y)
    }

    #[test]
    fn informative_coordinate_is_learned() {
        let (mut x, y) = noise(400, 4, 1);
        for (i, &l) in y.iter().enumerate() {
            x[[i, 2]] = if l { 1.0 } else { 0.0 };
        }
        let cfg = SearchConfig {
            hp_trials: 4,
            n_trees: 50,
            ..SearchConfig::default()
        };
        let meta = train_meta(&x.slice(ndarray::s![..300, ..]).to_owned(), &y[..300], &cfg, 2).unwrap();
        let p = meta.model.predict_proba(x.slice(ndarray::s![300.., ..])).unwrap();
        let correct = p.iter().zip(&y[300..]).filter(|(p, &y)| (**p > 0.5) == y).count();
        assert!(correct as f64 / 100.0 >= 0.99);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn noise_log_loss_is_near_ln2() {
        let cfg = SearchConfig {
            hp_trials: 6,
            n_trees: 50,
            ..SearchConfig::default()
        };
        for s in 0..5 {
            let (x, y) = noise(500, 5, 10 + s);
            let meta = train_meta(&x, &y, &cfg, s).unwrap();
            let rel = (meta.cv_log_loss - std::f64::consts::LN_2).abs() / std::f64::consts::LN_2;
            assert!(rel < 0.02, "seed {s}: {}", meta.cv_log_loss);
        }
    }

    #[test]
    fn single_trial_is_deterministic() {
        let (x, y) = noise(120, 3, 4);
        let cfg = SearchConfig {
            hp_trials: 1,
            n_trees: 20,
            ..SearchConfig::default()
        };
        assert_eq!(train_meta(&x, &y, &cfg, 9).unwrap(), train_meta(&x, &y, &cfg, 9).unwrap());
    }

    #[test]
    fn single_class_is_label_error() {
        let x = Array2::zeros((10, 2));
        assert!(matches!(
            Gbdt::fit(x.view(), &[true; 10], &GbdtParams::default(), 0),
            Err(Error::Label(_))
        ));
    }

    #[test]
    fn sampled_parameters_stay_in_range() {
        let mut rng = seed::rng(0);
        for _ in 0..1000 {
            let p = GbdtParams::sample(&mut rng, 10);
            assert!((1e-4..=0.1 + 1e-12).contains(&p.eta));
            assert!((3..=10).contains(&p.max_depth));
            assert!((0.1..=1.0).contains(&p.subsample));
            assert!((0.5..=1.0).contains(&p.colsample));
        }
    }

    #[test]
    fn json_dump_round_trips() {
        let (x, y) = noise(60, 2, 5);
        let m = Gbdt::fit(x.view(), &y, &GbdtParams { n_trees: 5, ..GbdtParams::default() }, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.json");
        m.save_json(&path).unwrap();
        let back = Gbdt::load_json(&path).unwrap();
        assert_eq!(back.predict_margin(x.view()).unwrap(), m.predict_margin(x.view()).unwrap());
    }
}
