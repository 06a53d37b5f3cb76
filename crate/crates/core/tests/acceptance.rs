//! Acceptance checks. Runs as a plain binary (no libtest harness) so every
//! criterion prints a PASS/FAIL line even when the run succeeds.
//!
//! Exact and analytic criteria gate the exit status. Criteria whose outcome
//! depends on training diffusion models at desk scale are reported only.

mod common;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use tabmia::attack_tf::{
    extract_features, make_grid, shadow_features, train_classifier, train_shadows, ClassifierConfig, FeatureMatrix,
    TfAttackConfig, TfClassifier, TfFeatureGrid,
};
use tabmia::dataset::{metric_space, model_space, Column, ColumnData, ColumnKind, EncodedTable, IdRole, RawTable, TableSchema};
use tabmia::diffusion::{self, evaluation_loss, initialize, prior_draw, Denoiser, DiffusionModel, DiffusionSpec, NoiseSchedule, TrainConfig};
use tabmia::ensemble::{distance_features, score_features, Ablation, EnsembleConfig, FleetConfig, ShadowWorld};
use tabmia::evaluation::{random_baseline, tpr_at_fpr, ScoredChallenges};
use tabmia::harness::{cells_csv, generate_toy_dataset, run_experiment, SweepAxis, ToySpec};
use tabmia::heuristics::{dcr, dcr_ideal, heuristic_report};
use tabmia::quality::{dependency_stats, marginal_stats};
use tabmia::scenarios::{apply_mismatch, divergence, MismatchKind, MismatchSpec};
use tabmia::seed;
use tabmia::stats::{ks_one_sample, ks_one_sample_p_value, standard_normal_cdf};

const FPR: f64 = 0.1;
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn tpr(scores: &[f64], labels: &[bool]) -> f64 {
    tpr_at_fpr(&ScoredChallenges::from_scores(scores, labels), FPR).expect("valid scores")
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------------------
// Brute-force oracles. They work on raw tables and re-derive the metric
// encoding themselves.

struct Instance {
    synthetic: RawTable,
    train: RawTable,
    holdout: RawTable,
}

fn random_schema(rng: &mut impl Rng, dyadic: bool) -> Arc<TableSchema> {
    let mut columns = Vec::new();
    for i in 0..rng.gen_range(2..=4) {
        let (min, width) = if dyadic {
            (rng.gen_range(-10..=10) as f64, (1u32 << rng.gen_range(1..=5)) as f64)
        } else {
            (rng.gen_range(-10.0..10.0), rng.gen_range(0.5..50.0))
        };
        columns.push(Column {
            name: format!("n{i}"),
            kind: ColumnKind::Numerical { min, max: min + width },
            id_role: IdRole::None,
        });
    }
    for i in 0..rng.gen_range(2..=3) {
        let k = rng.gen_range(2..=5);
        columns.push(Column {
            name: format!("c{i}"),
            kind: ColumnKind::Categorical {
                categories: (0..k).map(|c| format!("v{c}")).collect(),
            },
            id_role: IdRole::None,
        });
    }
    Arc::new(TableSchema::new(columns).expect("valid schema"))
}

/// Rows as per-column values; numerics on a 1/16 grid when `dyadic` so that
/// every encoded coordinate and distance is exact in floating point.
fn random_rows(schema: &TableSchema, n: usize, dyadic: bool, rng: &mut impl Rng) -> Vec<ColumnData> {
    schema
        .columns
        .iter()
        .map(|c| match &c.kind {
            ColumnKind::Numerical { min, max } => ColumnData::Numeric(
                (0..n)
                    .map(|_| {
                        if dyadic {
                            min + (max - min) * rng.gen_range(0..=16) as f64 / 16.0
                        } else {
                            rng.gen_range(*min..=*max)
                        }
                    })
                    .collect(),
            ),
            ColumnKind::Categorical { categories } => {
                let k = categories.len();
                ColumnData::Categorical((0..n).map(|_| ((rng.gen::<f64>().powi(2) * k as f64) as u32).min(k as u32 - 1)).collect())
            }
        })
        .collect()
}

fn random_instance(index: u64) -> Instance {
    let mut rng = seed::rng(9000 + index);
    let dyadic = index % 2 == 0;
    let schema = random_schema(&mut rng, dyadic);
    let n_train = rng.gen_range(20..=160);
    let n_holdout = rng.gen_range(20..=160);
    let n_syn = rng.gen_range(20..=160);
    let train = random_rows(&schema, n_train, dyadic, &mut rng);
    let holdout = random_rows(&schema, n_holdout, dyadic, &mut rng);
    let mut syn = random_rows(&schema, n_syn, dyadic, &mut rng);
    // copy some training rows verbatim so that hits and zero distances occur
    let copies = rng.gen_range(0..n_syn / 3);
    for s in 0..copies {
        let t = rng.gen_range(0..n_train);
        for (sc, tc) in syn.iter_mut().zip(&train) {
            match (sc, tc) {
                (ColumnData::Numeric(a), ColumnData::Numeric(b)) => a[s] = b[t],
                (ColumnData::Categorical(a), ColumnData::Categorical(b)) => a[s] = b[t],
                _ => unreachable!(),
            }
        }
    }
    let table = |cols| RawTable::from_columns(Arc::clone(&schema), cols).expect("valid table");
    Instance {
        synthetic: table(syn),
        train: table(train),
        holdout: table(holdout),
    }
}

/// Rows in `[-1, 1]` numerics plus one-hot categoricals, built by hand.
fn oracle_encode(t: &RawTable) -> Vec<Vec<f64>> {
    let schema = t.schema();
    (0..t.n_rows())
        .map(|r| {
            let mut row = Vec::new();
            for (c, col) in schema.columns.iter().enumerate() {
                match (&col.kind, t.column(c)) {
                    (ColumnKind::Numerical { min, max }, ColumnData::Numeric(v)) => {
                        row.push(2.0 * (v[r] - min) / (max - min) - 1.0)
                    }
                    (ColumnKind::Categorical { categories }, ColumnData::Categorical(v)) => {
                        for k in 0..categories.len() {
                            row.push(if v[r] as usize == k { 1.0 } else { 0.0 });
                        }
                    }
                    _ => unreachable!(),
                }
            }
            row
        })
        .collect()
}

fn sq(a: &[f64], b: &[f64], w: Option<&[f64]>) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        s += w.map_or(1.0, |w| w[i]) * d * d;
    }
    s
}

fn sorted_dists(q: &[f64], set: &[Vec<f64>]) -> Vec<f64> {
    let mut d: Vec<f64> = set.iter().map(|r| sq(q, r, None)).collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    d
}

fn oracle_dcr(s: &[Vec<f64>], t: &[Vec<f64>], h: &[Vec<f64>]) -> f64 {
    let closer = s.iter().filter(|q| sorted_dists(q, t)[0] < sorted_dists(q, h)[0]).count();
    closer as f64 / s.len() as f64
}

fn oracle_one_minus_nndr(s: &[Vec<f64>], real: &[Vec<f64>]) -> f64 {
    let ratios: Vec<f64> = s
        .iter()
        .map(|q| {
            let d = sorted_dists(q, real);
            if d[1] == 0.0 {
                1.0
            } else {
                (d[0] / d[1]).sqrt()
            }
        })
        .collect();
    1.0 - mean(&ratios)
}

fn oracle_hitting_rate(syn: &RawTable, real: &RawTable, pct: f64) -> f64 {
    let schema = real.schema();
    let hit = |r: usize| {
        (0..syn.n_rows()).any(|s| {
            schema.columns.iter().enumerate().all(|(c, col)| match (&col.kind, real.column(c), syn.column(c)) {
                (ColumnKind::Numerical { min, max }, ColumnData::Numeric(a), ColumnData::Numeric(b)) => {
                    (a[r] - b[s]).abs() <= pct / 100.0 * (max - min)
                }
                (_, ColumnData::Categorical(a), ColumnData::Categorical(b)) => a[r] == b[s],
                _ => false,
            })
        })
    };
    (0..real.n_rows()).filter(|&r| hit(r)).count() as f64 / real.n_rows() as f64
}

fn shannon(codes: impl Iterator<Item = u64>) -> f64 {
    let mut counts: HashMap<u64, usize> = HashMap::new();
    let mut n = 0usize;
    for c in codes {
        *counts.entry(c).or_default() += 1;
        n += 1;
    }
    -counts
        .values()
        .map(|&k| {
            let p = k as f64 / n as f64;
            p * p.ln()
        })
        .sum::<f64>()
}

fn bin20(v: f64, min: f64, max: f64) -> u64 {
    (((v - min) / (max - min) * 20.0).floor().max(0.0) as u64).min(19)
}

fn discrete_column(t: &RawTable, c: usize) -> Vec<u64> {
    match (&t.schema().columns[c].kind, t.column(c)) {
        (ColumnKind::Numerical { min, max }, ColumnData::Numeric(v)) => v.iter().map(|&x| bin20(x, *min, *max)).collect(),
        (_, ColumnData::Categorical(v)) => v.iter().map(|&x| x as u64).collect(),
        _ => unreachable!(),
    }
}

/// Per-coordinate EIR weights: inverse entropy per column, zero-entropy
/// columns and outliers capped at ten times the median.
fn oracle_eir_weights(real: &RawTable) -> Vec<f64> {
    let schema = real.schema();
    let raw: Vec<f64> = (0..schema.len())
        .map(|c| {
            let h = shannon(discrete_column(real, c).into_iter());
            if h > 0.0 {
                1.0 / h
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let mut finite: Vec<f64> = raw.iter().copied().filter(|w| w.is_finite()).collect();
    finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = finite.len();
    let median = if m == 0 {
        1.0
    } else if m % 2 == 1 {
        finite[m / 2]
    } else {
        (finite[m / 2 - 1] + finite[m / 2]) / 2.0
    };
    let mut w = Vec::new();
    for (c, col) in schema.columns.iter().enumerate() {
        let width = match &col.kind {
            ColumnKind::Numerical { .. } => 1,
            ColumnKind::Categorical { categories } => categories.len(),
        };
        w.extend(std::iter::repeat(raw[c].min(10.0 * median)).take(width));
    }
    w
}

fn oracle_eir(s: &[Vec<f64>], real: &[Vec<f64>], w: &[f64]) -> f64 {
    let hits = (0..real.len())
        .filter(|&i| {
            let ds = s.iter().map(|r| sq(&real[i], r, Some(w))).fold(f64::INFINITY, f64::min);
            let dr = (0..real.len())
                .filter(|&j| j != i)
                .map(|j| sq(&real[i], &real[j], Some(w)))
                .fold(f64::INFINITY, f64::min);
            ds <= dr
        })
        .count();
    hits as f64 / real.len() as f64
}

fn oracle_ks(a: &[f64], b: &[f64]) -> f64 {
    let cdf = |x: &[f64], v: f64| x.iter().filter(|&&y| y <= v).count() as f64 / x.len() as f64;
    a.iter().chain(b).map(|&v| (cdf(a, v) - cdf(b, v)).abs()).fold(0.0, f64::max)
}

fn oracle_tvd(a: &[u32], b: &[u32], k: usize) -> f64 {
    (0..k as u32)
        .map(|c| {
            let pa = a.iter().filter(|&&x| x == c).count() as f64 / a.len() as f64;
            let pb = b.iter().filter(|&&x| x == c).count() as f64 / b.len() as f64;
            (pa - pb).abs()
        })
        .sum::<f64>()
        / 2.0
}

fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

fn frobenius(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            s += (a[i][j] - b[i][j]).powi(2);
        }
    }
    s.sqrt()
}

fn oracle_corr_matrix(t: &RawTable) -> Vec<Vec<f64>> {
    let cols: Vec<&[f64]> = (0..t.schema().len()).filter_map(|c| t.numeric(c)).collect();
    (0..cols.len())
        .map(|i| (0..cols.len()).map(|j| if i == j { 1.0 } else { oracle_pearson(cols[i], cols[j]) }).collect())
        .collect()
}

/// MI as `H(A) + H(B) − H(A, B)`.
fn oracle_mi_matrix(t: &RawTable, include_numeric: bool) -> Vec<Vec<f64>> {
    let cols: Vec<Vec<u64>> = (0..t.schema().len())
        .filter(|&c| include_numeric || !t.schema().columns[c].is_numerical())
        .map(|c| discrete_column(t, c))
        .collect();
    let m = cols.len();
    let mut out = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            if i != j {
                let joint = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * 1000 + b);
                let mi = shannon(cols[i].iter().copied()) + shannon(cols[j].iter().copied()) - shannon(joint);
                out[i][j] = mi.max(0.0);
            }
        }
    }
    out
}

fn oracle_distance_features(c: &[Vec<f64>], s: &[Vec<f64>], r: &[Vec<f64>]) -> Vec<[f64; 7]> {
    c.iter()
        .map(|q| {
            let ds = sorted_dists(q, s);
            let dr = sorted_dists(q, r)[0].sqrt();
            let mut out = [0.0; 7];
            for k in 0..5 {
                out[k] = ds[k].sqrt();
            }
            out[5] = dr;
            out[6] = out[0] / dr.max(1e-12);
            out
        })
        .collect()
}

/// Best TPR over every strict threshold whose FPR is within the target.
fn oracle_tpr_at_fpr(scores: &[f64], labels: &[bool], fpr: f64) -> f64 {
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut best: f64 = 0.0;
    for tau in scores.iter().copied().chain([f64::INFINITY]) {
        let tp = scores.iter().zip(labels).filter(|(&s, &l)| l && s > tau).count() as f64;
        let fp = scores.iter().zip(labels).filter(|(&s, &l)| !l && s > tau).count() as f64;
        if fp / neg <= fpr {
            best = best.max(tp / pos);
        }
    }
    best
}

fn criterion_metric_oracles() -> Verdict {
    const TOL: f64 = 1e-9;
    let mut failures: Vec<String> = Vec::new();
    let mut check = |inst: u64, name: &str, got: f64, want: f64, exact: bool| {
        let ok = if exact { got == want } else { (got - want).abs() <= TOL };
        if !ok {
            failures.push(format!("#{inst} {name}: {got} vs {want}"));
        }
    };
    let n_instances = 24u64;
    for i in 0..n_instances {
        let inst = random_instance(i);
        let (syn, train, holdout) = (&inst.synthetic, &inst.train, &inst.holdout);
        let (s, t, h) = (oracle_encode(syn), oracle_encode(train), oracle_encode(holdout));
        let pct = [3.0, 6.25, 12.5][i as usize % 3];

        let rep = heuristic_report(syn, train, holdout, pct).unwrap();
        check(i, "dcr", rep.dcr, oracle_dcr(&s, &t, &h), true);
        let nn_t = oracle_one_minus_nndr(&s, &t);
        check(i, "nndr", rep.one_minus_nndr, nn_t, false);
        check(i, "nndr loss", rep.nndr_privacy_loss, nn_t - oracle_one_minus_nndr(&s, &h), false);
        check(i, "hr", rep.hitting_rate, oracle_hitting_rate(syn, train, pct), true);
        let w = oracle_eir_weights(&train.concat(holdout).unwrap());
        let (et, eh) = (oracle_eir(&s, &t, &w), oracle_eir(&s, &h, &w));
        check(i, "eir", rep.eir_train, et, true);
        check(i, "eir diff", rep.eir_diff, et - eh, true);

        let schema = train.schema();
        let (mut ks, mut tvd) = (Vec::new(), Vec::new());
        for (c, col) in schema.columns.iter().enumerate() {
            match (&col.kind, syn.column(c), train.column(c)) {
                (_, ColumnData::Numeric(a), ColumnData::Numeric(b)) => ks.push(oracle_ks(a, b)),
                (ColumnKind::Categorical { categories }, ColumnData::Categorical(a), ColumnData::Categorical(b)) => {
                    tvd.push(oracle_tvd(a, b, categories.len()))
                }
                _ => unreachable!(),
            }
        }
        let marg = marginal_stats(syn, train).unwrap();
        check(i, "ks", marg.avg_ks.unwrap(), mean(&ks), false);
        check(i, "tvd", marg.avg_tvd.unwrap(), mean(&tvd), false);
        for include_numeric in [false, true] {
            let dep = dependency_stats(syn, train, include_numeric).unwrap();
            check(i, "corr diff", dep.corr_diff.unwrap(), frobenius(&oracle_corr_matrix(syn), &oracle_corr_matrix(train)), false);
            let mi = frobenius(&oracle_mi_matrix(syn, include_numeric), &oracle_mi_matrix(train, include_numeric));
            check(i, "mi diff", dep.mi_diff.unwrap(), mi, false);
        }

        let got = distance_features(&metric_space(holdout).unwrap(), &metric_space(syn).unwrap(), &metric_space(train).unwrap()).unwrap();
        for (r, want) in oracle_distance_features(&h, &s, &t).iter().enumerate() {
            for k in 0..7 {
                check(i, "distance feature", got[[r, k]], want[k], false);
            }
        }

        let mut rng = seed::rng(7700 + i);
        let n = rng.gen_range(20..=500);
        let labels: Vec<bool> = (0..n).map(|j| j % 2 == 0 || rng.gen_bool(0.2)).collect();
        let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..40) as f64) / 4.0).collect();
        for fpr in [0.05, 0.1, 0.25] {
            let scored = ScoredChallenges::from_scores(&scores, &labels);
            check(i, "tpr@fpr", tpr_at_fpr(&scored, fpr).unwrap(), oracle_tpr_at_fpr(&scores, &labels, fpr), true);
        }
    }
    let detail = if failures.is_empty() {
        format!("{n_instances} random instances agree")
    } else {
        format!("{} mismatches, first: {}", failures.len(), failures[0])
    };
    verdict(failures.is_empty(), detail)
}

// ---------------------------------------------------------------------------

fn criterion_gradients() -> Verdict {
    // default layer widths divided by 64, time embedding by 32
    let spec = DiffusionSpec {
        timesteps: 2000,
        hidden_dims: vec![8, 16, 16, 16, 16, 8],
        time_embed_dim: 4,
    };
    let d = 6;
    let mut rng = seed::rng(31);
    let den = Denoiser::new(&spec, d, &mut rng);
    let x = Array2::from_shape_simple_fn((4, d), || StandardNormal.sample(&mut rng));
    let eps = Array2::from_shape_simple_fn((4, d), || StandardNormal.sample(&mut rng));
    let ts = [0, 1, 999, 1999];
    let (_, grads) = den.loss_and_gradients(x.view(), &ts, eps.view());
    let loss = |m: &Denoiser| m.loss_and_gradients(x.view(), &ts, eps.view()).0;
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for (li, g) in grads.iter().enumerate() {
        let (rows, cols) = g.weight.dim();
        for p in 0..rows * cols + g.bias.len() {
            let bumped = |delta: f64| {
                let mut m = den.clone();
                let layer = &mut m.net.layers[li];
                if p < rows * cols {
                    layer.weight[[p / cols, p % cols]] += delta;
                } else {
                    layer.bias[p - rows * cols] += delta;
                }
                loss(&m)
            };
            let fd = (bumped(h) - bumped(-h)) / (2.0 * h);
            let an = if p < rows * cols { g.weight[[p / cols, p % cols]] } else { g.bias[p - rows * cols] };
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    verdict(worst < 1e-4, format!("{} layers, max relative error {worst:.2e}", grads.len()))
}

fn criterion_diffusion_sanity() -> Verdict {
    let mut rng = seed::rng(5);
    let x0 = Array1::from_shape_simple_fn(8, || StandardNormal.sample(&mut rng));
    let eps = Array1::from_shape_simple_fn(8, || StandardNormal.sample(&mut rng));
    let keep = NoiseSchedule::from_betas(vec![0.0]);
    let destroy = NoiseSchedule::from_betas(vec![1.0]);
    let at_one = keep.forward_noise(x0.view(), 0, eps.view()).unwrap() == x0;
    let at_zero = destroy.forward_noise(x0.view(), 0, eps.view()).unwrap() == eps;
    let draws: Vec<f64> = prior_draw(10_000, 1, 2024).into_iter().collect();
    let d = ks_one_sample(&draws, standard_normal_cdf);
    let p = ks_one_sample_p_value(d, draws.len());
    verdict(
        at_one && at_zero && p >= 0.01,
        format!("alpha_bar=1 exact: {at_one}, alpha_bar=0 exact: {at_zero}, x_T KS p = {p:.3}"),
    )
}

fn criterion_dcr_calibration() -> Verdict {
    let mut gaps = Vec::new();
    for s in SEEDS {
        let pop = generate_toy_dataset(&ToySpec::berka_like(5000), 100 + s).unwrap();
        let enc = metric_space(&pop).unwrap();
        let rows = |a: usize, b: usize| enc.select_rows(&(a..b).collect::<Vec<_>>());
        let (train, holdout, oracle_syn) = (rows(0, 2000), rows(2000, 3000), rows(3000, 5000));
        let v = dcr(&oracle_syn, &train, &holdout).unwrap();
        gaps.push((v - dcr_ideal(2000, 1000)).abs());
    }
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    verdict(worst < 0.05, format!("|dcr - 2/3| per seed {}", fmt(&gaps)))
}

// ---------------------------------------------------------------------------
// Diffusion benchmarks. A seeded berka-like population of 4000 rows: the
// target trains on the first `n` rows, rows `n..2n` are challenge
// non-members, and the attacker holds rows 2000..4000.

const BENCH_ROWS: usize = 4000;
const ATTACKER_START: usize = 2000;

fn bench_spec() -> DiffusionSpec {
    DiffusionSpec {
        timesteps: 50,
        hidden_dims: vec![128, 128],
        time_embed_dim: 16,
    }
}

fn bench_train(steps: u64, seed_value: u64) -> TrainConfig {
    TrainConfig {
        steps,
        batch_size: 64,
        learning_rate: 1e-3,
        seed: seed_value,
        ..TrainConfig::default()
    }
}

fn tf_config(n_shadows: usize, train_size: usize, steps: u64) -> TfAttackConfig {
    TfAttackConfig {
        n_shadows,
        shadow_train_size: train_size,
        shadow_spec: bench_spec(),
        shadow_train: bench_train(steps, 0),
        grid_size: 20,
        classifier: ClassifierConfig {
            learning_rate: 1e-3,
            steps: 500,
            ..ClassifierConfig::default()
        },
        ..TfAttackConfig::default()
    }
}

struct Bench {
    data: EncodedTable,
    n: usize,
    seed: u64,
}

impl Bench {
    fn new(n: usize, seed_value: u64) -> Self {
        let pop = generate_toy_dataset(&ToySpec::berka_like(BENCH_ROWS), seed_value).unwrap();
        Self {
            data: model_space(&pop).unwrap(),
            n,
            seed: seed_value,
        }
    }

    fn rows(&self, a: usize, b: usize) -> EncodedTable {
        self.data.select_rows(&(a..b).collect::<Vec<_>>())
    }

    fn members(&self) -> EncodedTable {
        self.rows(0, self.n)
    }

    fn attacker(&self) -> EncodedTable {
        self.rows(ATTACKER_START, BENCH_ROWS)
    }

    fn challenge(&self) -> (EncodedTable, Vec<bool>) {
        let labels = (0..2 * self.n).map(|i| i < self.n).collect();
        (self.rows(0, 2 * self.n), labels)
    }

    fn target(&self, steps: u64) -> DiffusionModel {
        diffusion::train(&self.members(), &bench_spec(), &bench_train(steps, self.seed)).unwrap()
    }

    /// White-box TF TPR with shadows trained like the target.
    fn white_box_tpr(&self, target: &DiffusionModel, n_shadows: usize, steps: u64) -> f64 {
        let cfg = tf_config(n_shadows, self.n, steps);
        let attacker = self.attacker();
        let grid = make_grid(cfg.shadow_spec.timesteps, attacker.dim(), cfg.grid_size, self.seed).unwrap();
        let shadows = train_shadows(&attacker, &cfg, self.seed).unwrap();
        let features = shadow_features(&attacker, &shadows, &cfg, &grid, self.seed).unwrap();
        let clf = train_classifier(&features, &cfg.classifier, self.seed).unwrap();
        let (challenge, labels) = self.challenge();
        tpr(&score(&clf, &extract_features(target, &challenge, &grid).unwrap()), &labels)
    }
}

fn score(clf: &TfClassifier, features: &Array2<f64>) -> Vec<f64> {
    clf.predict(features).unwrap()
}

/// The memorization benchmark: 32 target rows, 15k steps, 8 shadows.
struct Memorization {
    bench: Bench,
    target: DiffusionModel,
    untrained: DiffusionModel,
    loss_ratio: f64,
    grid: TfFeatureGrid,
    features: Vec<FeatureMatrix>,
    cfg: TfAttackConfig,
}

const MEM_ROWS: usize = 32;
const MEM_STEPS: u64 = 15_000;

impl Memorization {
    fn build(seed_value: u64) -> Self {
        let bench = Bench::new(MEM_ROWS, seed_value);
        let members = bench.members();
        let target = bench.target(MEM_STEPS);
        let untrained = initialize(&members, &bench_spec(), seed_value).unwrap();
        let loss_ratio = evaluation_loss(&target, &members, 16, 1).unwrap() / evaluation_loss(&untrained, &members, 16, 1).unwrap();
        let cfg = tf_config(8, MEM_ROWS, MEM_STEPS);
        let attacker = bench.attacker();
        let grid = make_grid(cfg.shadow_spec.timesteps, attacker.dim(), cfg.grid_size, seed_value).unwrap();
        let shadows = train_shadows(&attacker, &cfg, seed_value).unwrap();
        let features = shadow_features(&attacker, &shadows, &cfg, &grid, seed_value).unwrap();
        Self {
            bench,
            target,
            untrained,
            loss_ratio,
            grid,
            features,
            cfg,
        }
    }

    fn classifier(&self, n_shadows: usize) -> TfClassifier {
        train_classifier(&self.features[..n_shadows], &self.cfg.classifier, self.bench.seed).unwrap()
    }

    fn tpr(&self, clf: &TfClassifier, model: &DiffusionModel) -> f64 {
        let (challenge, labels) = self.bench.challenge();
        tpr(&score(clf, &extract_features(model, &challenge, &self.grid).unwrap()), &labels)
    }
}

fn criterion_memorization(mem: &[Memorization]) -> Verdict {
    let mut trained = Vec::new();
    let mut untrained = Vec::new();
    let mut ratios = Vec::new();
    for m in mem {
        let clf = m.classifier(8);
        trained.push(m.tpr(&clf, &m.target));
        untrained.push(m.tpr(&clf, &m.untrained));
        ratios.push(m.loss_ratio);
    }
    let ok = ratios.iter().all(|&r| r < 0.1)
        && trained.iter().all(|&t| t >= 0.5)
        && untrained.iter().all(|&t| t <= 0.25);
    verdict(
        ok,
        format!("loss ratio {}, trained {}, untrained {}", fmt(&ratios), fmt(&trained), fmt(&untrained)),
    )
}

fn criterion_steps_trend() -> Verdict {
    let steps = [500u64, 5_000, 50_000];
    let mut monotone = 0;
    let mut lines = Vec::new();
    for s in SEEDS {
        let bench = Bench::new(128, s);
        let t: Vec<f64> = steps.iter().map(|&st| bench.white_box_tpr(&bench.target(st), 4, st)).collect();
        if t.windows(2).all(|w| w[1] >= w[0]) {
            monotone += 1;
        }
        lines.push(fmt(&t));
    }
    verdict(monotone >= 4, format!("{monotone}/5 non-decreasing; per seed {}", lines.join(" ")))
}

fn criterion_size_trend() -> Verdict {
    let mut wins = 0;
    let mut lines = Vec::new();
    for s in SEEDS {
        let t: Vec<f64> = [64usize, 1024]
            .iter()
            .map(|&n| {
                let bench = Bench::new(n, s);
                bench.white_box_tpr(&bench.target(MEM_STEPS), 4, MEM_STEPS)
            })
            .collect();
        if t[0] - t[1] >= 0.1 {
            wins += 1;
        }
        lines.push(fmt(&t));
    }
    verdict(wins >= 4, format!("{wins}/5 with TPR(64) - TPR(1024) >= 0.1; per seed {}", lines.join(" ")))
}

fn criterion_shadow_count(mem: &[Memorization]) -> Verdict {
    let mut one = Vec::new();
    let mut eight = Vec::new();
    for m in mem {
        one.push(m.tpr(&m.classifier(1), &m.target));
        eight.push(m.tpr(&m.classifier(8), &m.target));
    }
    let gap = (mean(&one) - mean(&eight)).abs();
    verdict(
        gap <= 0.1,
        format!("mean gap {gap:.3}; 1 shadow {}, 8 shadows {}", fmt(&one), fmt(&eight)),
    )
}

fn ensemble_config(synth_multiple: usize, use_rmia: bool) -> EnsembleConfig {
    EnsembleConfig {
        use_rmia,
        rmia_fleet: FleetConfig {
            n_single_phase: 2,
            pretrain_bases: 1,
            finetuned_per_base: 2,
        },
        meta_train_budget: (MEM_ROWS, MEM_ROWS),
        shadow_train_size: MEM_ROWS,
        shadow_synth_size: Some(MEM_ROWS * synth_multiple),
        shadow_spec: bench_spec(),
        shadow_train: bench_train(MEM_STEPS, 0),
        grid_size: 20,
        ..EnsembleConfig::default()
    }
}

struct EnsembleRun {
    /// TPR per ablation for synthetic multiple 1.
    by_flags: Vec<(Ablation, f64)>,
    /// Distance + DOMIAS TPR for synthetic multiples 1 and 10.
    light: (f64, f64),
    dims_ok: bool,
}

const ABLATIONS: [Ablation; 4] = [
    Ablation::FULL,
    Ablation { distance: true, domias: false, rmia: false },
    Ablation { distance: false, domias: true, rmia: false },
    Ablation { distance: false, domias: false, rmia: true },
];

const LIGHT: Ablation = Ablation { distance: true, domias: true, rmia: false };

fn run_ensemble(m: &Memorization) -> EnsembleRun {
    let bench = &m.bench;
    let attacker = bench.attacker();
    let (challenge, labels) = bench.challenge();
    let s = bench.seed;

    let world = ShadowWorld::prepare(&attacker, &ensemble_config(1, true), s).unwrap();
    let syn1 = diffusion::sample(&m.target, MEM_ROWS, seed::derive(s, "acceptance/synth", 1)).unwrap();
    let feats = world.challenge_features(&syn1, &challenge, 0).unwrap();
    let mut dims_ok = feats.matrix.ncols() == 9 && world.meta_features.matrix.ncols() == 9;
    let mut by_flags = Vec::new();
    for flags in ABLATIONS.iter().chain([&LIGHT]) {
        let meta = world.fit_meta(flags).unwrap();
        let expected = 7 * flags.distance as usize + flags.domias as usize + flags.rmia as usize;
        dims_ok &= meta.model.n_features == expected && feats.select(flags).unwrap().matrix.ncols() == expected;
        by_flags.push((*flags, tpr(&score_features(&meta, &feats, flags).unwrap(), &labels)));
    }
    let light1 = by_flags.pop().expect("light ablation").1;

    let world10 = ShadowWorld::prepare(&attacker, &ensemble_config(10, false), s).unwrap();
    dims_ok &= world10.meta_features.matrix.ncols() == 8 && world10.fleet.is_empty();
    let syn10 = diffusion::sample(&m.target, 10 * MEM_ROWS, seed::derive(s, "acceptance/synth", 10)).unwrap();
    let feats10 = world10.challenge_features(&syn10, &challenge, 0).unwrap();
    dims_ok &= feats10.matrix.ncols() == 8;
    let meta10 = world10.fit_meta(&LIGHT).unwrap();
    let light10 = tpr(&score_features(&meta10, &feats10, &LIGHT).unwrap(), &labels);
    EnsembleRun {
        by_flags,
        light: (light1, light10),
        dims_ok,
    }
}

fn criterion_synth_volume(runs: &[EnsembleRun]) -> Verdict {
    let wins = runs.iter().filter(|r| r.light.1 >= r.light.0).count();
    let pairs: Vec<String> = runs.iter().map(|r| format!("{:.3}->{:.3}", r.light.0, r.light.1)).collect();
    verdict(wins >= 4, format!("{wins}/5 with TPR(x10) >= TPR(x1); per seed {}", pairs.join(" ")))
}

fn criterion_ablation(runs: &[EnsembleRun]) -> Verdict {
    let means: Vec<(String, f64)> = (0..ABLATIONS.len())
        .map(|k| {
            let v: Vec<f64> = runs.iter().map(|r| r.by_flags[k].1).collect();
            (runs[0].by_flags[k].0.label(), mean(&v))
        })
        .collect();
    let full = means[0].1;
    let dominant = means[1..].iter().all(|(_, v)| full >= v - 0.1);
    let dims_ok = runs.iter().all(|r| r.dims_ok);
    let summary: Vec<String> = means.iter().map(|(l, v)| format!("{l}={v:.3}")).collect();
    verdict(dominant && dims_ok, format!("mean TPR {}; dims exact: {dims_ok}", summary.join(" ")))
}

// ---------------------------------------------------------------------------

fn criterion_divergence_pattern() -> Verdict {
    let table = generate_toy_dataset(&ToySpec::berka_like(2000), 77).unwrap().features_only();
    let permuted = apply_mismatch(&table, &MismatchSpec::new(MismatchKind::PermuteMarginals, 1)).unwrap();
    let p = divergence(&table, &permuted, 0.05, 1000, 2).unwrap();
    let noise_spec = MismatchSpec {
        fraction_numeric: 1.0,
        fraction_categorical: 1.0,
        ..MismatchSpec::new(MismatchKind::UniformNoise, 3)
    };
    let noisy = apply_mismatch(&table, &noise_spec).unwrap();
    let u = divergence(&table, &noisy, 0.05, 1000, 4).unwrap();
    let schema = table.schema();
    let degenerate = |name: &str| {
        let c = schema.index_of(name).expect("column exists");
        let mut distinct = discrete_values(&table, c);
        distinct.sort_unstable();
        distinct.dedup();
        distinct.len() < 2
    };
    let live: Vec<_> = u.per_column.iter().filter(|t| !degenerate(&t.name)).collect();
    let pct = 100.0 * live.iter().filter(|t| t.significant).count() as f64 / live.len() as f64;
    verdict(
        p.pct_marginals_differing == 0.0 && p.corr_delta > 1.0 && pct >= 90.0,
        format!(
            "permute: pct {:.1}, corr_delta {:.3}; uniform noise: pct {pct:.1} over {} columns",
            p.pct_marginals_differing,
            p.corr_delta,
            live.len()
        ),
    )
}

fn discrete_values(t: &RawTable, c: usize) -> Vec<u64> {
    match t.column(c) {
        ColumnData::Numeric(v) => v.iter().map(|x| x.to_bits()).collect(),
        ColumnData::Categorical(v) => v.iter().map(|&x| x as u64).collect(),
    }
}

fn criterion_random_baseline() -> Verdict {
    let expected = random_baseline(FPR).unwrap();
    let mut values = Vec::new();
    for s in 0..10 {
        let mut rng = seed::rng(500 + s);
        let labels: Vec<bool> = (0..10_000).map(|i| i < 5_000).collect();
        let scores: Vec<f64> = (0..10_000).map(|_| rng.gen()).collect();
        values.push(tpr(&scores, &labels));
    }
    let worst = values.iter().map(|v| (v - expected).abs()).fold(0.0, f64::max);
    verdict(worst <= 0.03, format!("max |tpr - {expected}| = {worst:.4} over 10 seeds"))
}

fn criterion_determinism() -> Verdict {
    let cfg = common::tiny_experiment(SweepAxis::TrainSteps, vec![serde_json::json!(20), serde_json::json!(40)]);
    let a = cells_csv(&run_experiment(&cfg, None).unwrap()).unwrap();
    let b = cells_csv(&run_experiment(&cfg, None).unwrap()).unwrap();
    verdict(a == b, format!("{} bytes, identical: {}", a.len(), a == b))
}

// ---------------------------------------------------------------------------

struct Criterion {
    id: u8,
    name: &'static str,
    gate: bool,
    verdict: Verdict,
    seconds: f64,
}

fn timed(id: u8, name: &'static str, gate: bool, f: impl FnOnce() -> Verdict) -> Criterion {
    let start = Instant::now();
    let verdict = f();
    let c = Criterion {
        id,
        name,
        gate,
        verdict,
        seconds: start.elapsed().as_secs_f64(),
    };
    println!(
        "criterion {:>2} {} {} ({:.0}s): {}",
        c.id,
        if c.verdict.pass { "PASS" } else { "FAIL" },
        c.name,
        c.seconds,
        c.verdict.detail
    );
    c
}

/// Criterion ids given on the command line, or all of them.
fn selected() -> Vec<u8> {
    let ids: Vec<u8> = std::env::args()
        .skip(1)
        .flat_map(|a| a.split(',').filter_map(|x| x.trim().parse().ok()).collect::<Vec<u8>>())
        .collect();
    if ids.is_empty() {
        (1..=13).collect()
    } else {
        ids
    }
}

fn main() {
    let want = selected();
    let on = |id: u8| want.contains(&id);
    let mut results = Vec::new();
    if on(1) {
        results.push(timed(1, "metric oracles", true, criterion_metric_oracles));
    }
    if on(2) {
        results.push(timed(2, "denoiser gradients", true, criterion_gradients));
    }
    if on(3) {
        results.push(timed(3, "diffusion sanity", true, criterion_diffusion_sanity));
    }
    if on(4) {
        results.push(timed(4, "dcr calibration", true, criterion_dcr_calibration));
    }
    if on(10) {
        results.push(timed(10, "divergence pattern", true, criterion_divergence_pattern));
    }
    if on(11) {
        results.push(timed(11, "random baseline", true, criterion_random_baseline));
    }
    if on(13) {
        results.push(timed(13, "end-to-end determinism", true, criterion_determinism));
    }
    if [5, 8, 9, 12].iter().any(|&id| on(id)) {
        let start = Instant::now();
        let mem: Vec<Memorization> = SEEDS.iter().map(|&s| Memorization::build(s)).collect();
        println!("memorization benchmark built in {:.0}s", start.elapsed().as_secs_f64());
        if on(5) {
            results.push(timed(5, "memorization detection", false, || criterion_memorization(&mem)));
        }
        if on(9) {
            results.push(timed(9, "shadow count robustness", false, || criterion_shadow_count(&mem)));
        }
        if on(8) || on(12) {
            let start = Instant::now();
            let runs: Vec<EnsembleRun> = mem.iter().map(run_ensemble).collect();
            println!("ensemble runs finished in {:.0}s", start.elapsed().as_secs_f64());
            if on(8) {
                results.push(timed(8, "synthesis volume trend", false, || criterion_synth_volume(&runs)));
            }
            if on(12) {
                results.push(timed(12, "ensemble ablation", false, || criterion_ablation(&runs)));
            }
        }
    }
    if on(6) {
        results.push(timed(6, "training steps trend", false, criterion_steps_trend));
    }
    if on(7) {
        results.push(timed(7, "training size trend", false, criterion_size_trend));
    }
    results.sort_by_key(|c| c.id);

    println!("acceptance summary:");
    for c in &results {
        println!("  criterion {:>2} {}", c.id, if c.verdict.pass { "PASS" } else { "FAIL" });
    }
    let passed = results.iter().filter(|c| c.verdict.pass).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    let gate_failures: Vec<u8> = results.iter().filter(|c| c.gate && !c.verdict.pass).map(|c| c.id).collect();
    let reported: Vec<u8> = results.iter().filter(|c| !c.gate && !c.verdict.pass).map(|c| c.id).collect();
    if !reported.is_empty() {
        println!("reported (non-gating) failures: {reported:?}");
    }
    if !gate_failures.is_empty() {
        eprintln!("gating criteria failed: {gate_failures:?}");
        std::process::exit(1);
    }
}
