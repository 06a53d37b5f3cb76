use ndarray::{Array2, ArrayView1};
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Regression,
    Classification { n_classes: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 12,
            min_samples_split: 2,
        }
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf(Vec<f64>),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf(&self, x: ArrayView1<f64>) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

/// Bootstrap-aggregated CART trees with random feature subsets per split:
/// `√p` features for classification (Gini), `max(1, p/3)` for regression
/// (variance).
#[derive(Clone, Debug)]
pub struct RandomForest {
    task: Task,
    trees: Vec<Tree>,
}

struct Builder<'a> {
    x: &'a Array2<f64>,
    y: &'a [f64],
    task: Task,
    cfg: &'a ForestConfig,
    n_features: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf_value(&self, rows: &[usize]) -> Vec<f64> {
        match self.task {
            Task::Regression => vec![rows.iter().map(|&r| self.y[r]).sum::<f64>() / rows.len() as f64],
            Task::Classification { n_classes } => {
                let mut counts = vec![0.0; n_classes];
                for &r in rows {
                    counts[self.y[r] as usize] += 1.0;
                }
                let n = rows.len() as f64;
                counts.iter_mut().for_each(|c| *c /= n);
                counts
            }
        }
    }

    fn is_pure(&self, rows: &[usize]) -> bool {
        let first = self.y[rows[0]];
        rows.iter().all(|&r| self.y[r] == first)
    }

    /// Impurity times node size; lower is better.
    fn cost(&self, stats: &SideStats) -> f64 {
        match self.task {
            Task::Regression => stats.sum_sq - stats.sum * stats.sum / stats.n,
            Task::Classification { .. } => {
                stats.n - stats.counts.iter().map(|c| c * c).sum::<f64>() / stats.n
            }
        }
    }

    fn build(&mut self, rows: &mut [usize], depth: usize, rng: &mut seed::Rng) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(Vec::new()));
        if depth >= self.cfg.max_depth || rows.len() < self.cfg.min_samples_split || self.is_pure(rows) {
            self.nodes[id] = Node::Leaf(self.leaf_value(rows));
            return id;
        }
        let p = self.x.ncols();
        let features = index::sample(rng, p, self.n_features.min(p)).into_vec();
        let n_classes = match self.task {
            Task::Classification { n_classes } => n_classes,
            Task::Regression => 0,
        };
        let mut total = SideStats::new(n_classes);
        for &r in rows.iter() {
            total.add(self.y[r], self.task);
        }
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = rows.to_vec();
        for &f in &features {
            order.sort_by(|&a, &b| self.x[[a, f]].total_cmp(&self.x[[b, f]]));
            let mut left = SideStats::new(n_classes);
            let mut right = total.clone();
            for i in 0..order.len() - 1 {
                let yv = self.y[order[i]];
                left.add(yv, self.task);
                right.remove(yv, self.task);
                let (a, b) = (self.x[[order[i], f]], self.x[[order[i + 1], f]]);
                if a == b {
                    continue;
                }
                let c = self.cost(&left) + self.cost(&right);
                if best.map_or(true, |(bc, _, _)| c < bc) {
                    best = Some((c, f, 0.5 * (a + b)));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            self.nodes[id] = Node::Leaf(self.leaf_value(rows));
            return id;
        };
        let mid = partition(rows, |r| self.x[[r, feature]] <= threshold);
        let (l, r) = rows.split_at_mut(mid);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

fn partition(rows: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut mid = 0;
    for i in 0..rows.len() {
        if pred(rows[i]) {
            rows.swap(i, mid);
            mid += 1;
        }
    }
    mid
}

#[derive(Clone)]
struct SideStats {
    n: f64,
    sum: f64,
    sum_sq: f64,
    counts: Vec<f64>,
}

impl SideStats {
    fn new(n_classes: usize) -> Self {
        Self {
            n: 0.0,
            sum: 0.0,
            sum_sq: 0.0,
            counts: vec![0.0; n_classes],
        }
    }

    fn add(&mut self, y: f64, task: Task) {
        self.n += 1.0;
        match task {
            Task::Regression => {
                self.sum += y;
                self.sum_sq += y * y;
            }
            Task::Classification { .. } => self.counts[y as usize] += 1.0,
        }
    }

    fn remove(&mut self, y: f64, task: Task) {
        self.n -= 1.0;
        match task {
            Task::Regression => {
                self.sum -= y;
                self.sum_sq -= y * y;
            }
            Task::Classification { .. } => self.counts[y as usize] -= 1.0,
        }
    }
}

impl RandomForest {
    /// `y` holds regression targets or class indices stored as floats.
    pub fn fit(x: &Array2<f64>, y: &[f64], task: Task, cfg: &ForestConfig, seed_value: u64) -> Self {
        assert_eq!(x.nrows(), y.len(), "one target per row");
        assert!(!y.is_empty(), "forest needs training rows");
        let p = x.ncols();
        let n_features = match task {
            Task::Classification { .. } => ((p as f64).sqrt().round() as usize).max(1),
            Task::Regression => (p / 3).max(1),
        };
        let trees = (0..cfg.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::derived_rng(seed_value, "forest/tree", t as u64);
                let n = y.len();
                let mut rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                let mut b = Builder {
                    x,
                    y,
                    task,
                    cfg,
                    n_features,
                    nodes: Vec::new(),
                };
                b.build(&mut rows, 0, &mut rng);
                Tree { nodes: b.nodes }
            })
            .collect();
        Self { task, trees }
    }

    /// Mean prediction for regression, majority class (averaged leaf
    /// distributions, lowest index on ties) for classification.
    pub fn predict(&self, x: &Array2<f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|row| match self.task {
                Task::Regression => {
                    self.trees.iter().map(|t| t.leaf(row)[0]).sum::<f64>() / self.trees.len() as f64
                }
                Task::Classification { n_classes } => {
                    let mut acc = vec![0.0; n_classes];
                    for t in &self.trees {
                        for (a, p) in acc.iter_mut().zip(t.leaf(row)) {
                            *a += p;
                        }
                    }
                    let mut best = 0;
                    for c in 1..n_classes {
                        if acc[c] > acc[best] {
                            best = c;
                        }
                    }
                    best as f64
                }
            })
            .collect()
    }
}
