//! Statistical building blocks shared by the divergence report, the quality
//! suite and the privacy heuristics.

use std::f64::consts::PI;

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Survival function of the Kolmogorov distribution, `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-theta form converges fast for small λ.
        let s: f64 = (1..=20)
            .map(|k| {
                let k = (2 * k - 1) as f64;
                (-k * k * PI * PI / (8.0 * lambda * lambda)).exp()
            })
            .sum();
        (1.0 - (2.0 * PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Asymptotic p-value for the two-sample KS test.
pub fn ks_p_value(d: f64, n: usize, m: usize) -> f64 {
    if n == 0 || m == 0 {
        return 1.0;
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = ne.sqrt();
    kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d)
}

/// One-sample KS statistic of `sample` against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

pub fn ks_one_sample_p_value(d: f64, n: usize) -> f64 {
    let sq = (n as f64).sqrt();
    kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d)
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Category frequencies over `k` categories.
pub fn frequencies(codes: &[u32], k: usize) -> Vec<f64> {
    let mut counts = vec![0.0; k];
    for &c in codes {
        counts[c as usize] += 1.0;
    }
    let n = codes.len().max(1) as f64;
    counts.iter_mut().for_each(|c| *c /= n);
    counts
}

/// Total variation distance `½ Σ |p − q|` between two categorical samples.
pub fn tvd(a: &[u32], b: &[u32], k: usize) -> f64 {
    let p = frequencies(a, k);
    let q = frequencies(b, k);
    0.5 * p.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation.
pub fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

/// `ln Σ exp(x_i)`, computed without overflow. Empty input gives `-∞`.
pub fn logsumexp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Pearson correlation; `None` when either column is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        None
    } else {
        Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
    }
}

/// Pearson matrix with unit diagonal; pairs involving a constant column are 0.
pub fn correlation_matrix(columns: &[&[f64]]) -> Vec<Vec<f64>> {
    let m = columns.len();
    let mut out = vec![vec![0.0; m]; m];
    for i in 0..m {
        out[i][i] = 1.0;
        for j in (i + 1)..m {
            let r = pearson(columns[i], columns[j]).unwrap_or_else(|| {
                log::warn!("constant column in correlation matrix; correlation set to 0");
                0.0
            });
            out[i][j] = r;
            out[j][i] = r;
        }
    }
    out
}

/// Mutual information in nats from the joint contingency table.
pub fn mutual_information(a: &[u32], ka: usize, b: &[u32], kb: usize) -> f64 {
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    let mut joint = vec![0usize; ka * kb];
    let mut pa = vec![0usize; ka];
    let mut pb = vec![0usize; kb];
    for (&x, &y) in a.iter().zip(b) {
        joint[x as usize * kb + y as usize] += 1;
        pa[x as usize] += 1;
        pb[y as usize] += 1;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for x in 0..ka {
        for y in 0..kb {
            let c = joint[x * kb + y];
            if c > 0 {
                let pxy = c as f64 / nf;
                mi += pxy * (pxy * nf * nf / (pa[x] as f64 * pb[y] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Pairwise MI matrix over discrete columns `(codes, n_categories)`, zero
/// diagonal.
pub fn mi_matrix(columns: &[(&[u32], usize)]) -> Vec<Vec<f64>> {
    let m = columns.len();
    let mut out = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let v = mutual_information(columns[i].0, columns[i].1, columns[j].0, columns[j].1);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

pub fn frobenius_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)))
        .sum::<f64>()
        .sqrt()
}

/// Shannon entropy (nats) of a discrete sample.
pub fn entropy(codes: &[u32], k: usize) -> f64 {
    frequencies(codes, k)
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

/// Equal-width binning over `[min, max]`; values outside are clamped.
pub fn bin_equal_width(values: &[f64], min: f64, max: f64, bins: usize) -> Vec<u32> {
    let span = max - min;
    values
        .iter()
        .map(|&v| {
            if span <= 0.0 {
                0
            } else {
                let b = ((v - min) / span * bins as f64).floor() as i64;
                b.clamp(0, bins as i64 - 1) as u32
            }
        })
        .collect()
}

/// Lower empirical quantile: the `⌈q·n⌉`-th smallest value.
pub fn quantile_lower(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}
