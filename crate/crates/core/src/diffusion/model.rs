use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::schedule::NoiseSchedule;
use crate::dataset::{DataContext, EncodedTable, Encoding, NumericNorm};
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamParams, Dense, Mlp};

/// Architecture of a diffusion generator: timestep count, hidden widths of
/// the denoiser and sinusoidal time-embedding width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionSpec {
    pub timesteps: usize,
    pub hidden_dims: Vec<usize>,
    pub time_embed_dim: usize,
}

impl Default for DiffusionSpec {
    fn default() -> Self {
        Self {
            timesteps: 2000,
            hidden_dims: vec![512, 1024, 1024, 1024, 1024, 512],
            time_embed_dim: 128,
        }
    }
}

impl DiffusionSpec {
    pub fn layer_dims(&self, data_dim: usize) -> Vec<usize> {
        let mut dims = vec![data_dim + self.time_embed_dim];
        dims.extend(&self.hidden_dims);
        dims.push(data_dim);
        dims
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub adam: AdamParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 200_000,
            batch_size: 4096,
            learning_rate: 1e-3,
            seed: 0,
            adam: AdamParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Config("learning_rate must be non-negative".into()));
        }
        Ok(())
    }
}

/// Sinusoidal embedding of a timestep: `[cos(t·f_i)..., sin(t·f_i)...]` with
/// `f_i = 10000^{-i/half}`; odd widths get a trailing zero.
pub fn time_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10000f64).ln() * i as f64 / half as f64).exp();
        let arg = t as f64 * freq;
        out[i] = arg.cos();
        out[half + i] = arg.sin();
    }
    out
}

/// ε-prediction network over `concat(x_t, embed(t))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Denoiser {
    pub net: Mlp,
    pub data_dim: usize,
    pub time_embed_dim: usize,
}

impl Denoiser {
    pub fn new(spec: &DiffusionSpec, data_dim: usize, rng: &mut crate::seed::Rng) -> Self {
        Self {
            net: Mlp::new(
                &spec.layer_dims(data_dim),
                Activation::Silu,
                Activation::Identity,
                rng,
            ),
            data_dim,
            time_embed_dim: spec.time_embed_dim,
        }
    }

    pub fn zeros(spec: &DiffusionSpec, data_dim: usize) -> Self {
        Self {
            net: Mlp::zeros(&spec.layer_dims(data_dim), Activation::Silu, Activation::Identity),
            data_dim,
            time_embed_dim: spec.time_embed_dim,
        }
    }

    fn input(&self, x_t: ArrayView2<f64>, ts: &[usize]) -> Array2<f64> {
        let n = x_t.nrows();
        let mut input = Array2::zeros((n, self.data_dim + self.time_embed_dim));
        input.slice_mut(s![.., ..self.data_dim]).assign(&x_t);
        let mut cached: Option<(usize, Vec<f64>)> = None;
        for (r, &t) in ts.iter().enumerate() {
            if cached.as_ref().map(|c| c.0) != Some(t) {
                cached = Some((t, time_embedding(t, self.time_embed_dim)));
            }
            let emb = &cached.as_ref().expect("just set").1;
            for (j, &v) in emb.iter().enumerate() {
                input[[r, self.data_dim + j]] = v;
            }
        }
        input
    }

    /// Batched forward pass; `ts[i]` is the timestep of row `i`.
    pub fn predict(&self, x_t: ArrayView2<f64>, ts: &[usize]) -> Array2<f64> {
        self.net.forward(self.input(x_t, ts).view())
    }

    /// Batch loss `mean_i ‖ε̂_i − ε_i‖²` and its gradient for every layer.
    pub fn loss_and_gradients(
        &self,
        x_t: ArrayView2<f64>,
        ts: &[usize],
        epsilon: ArrayView2<f64>,
    ) -> (f64, Vec<Dense>) {
        let n = x_t.nrows() as f64;
        let cache = self.net.forward_cached(self.input(x_t, ts).view());
        let residual = cache.output() - &epsilon;
        let loss = residual.iter().map(|v| v * v).sum::<f64>() / n;
        let grads = self.net.backward(&cache, residual * (2.0 / n));
        (loss, grads)
    }
}

/// Provenance of a trained model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub config_hash: String,
    pub data_hash: String,
    pub seed: u64,
}

/// Noise schedule, denoiser weights and the data coordinates they live in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionModel {
    pub spec: DiffusionSpec,
    pub schedule: NoiseSchedule,
    pub denoiser: Denoiser,
    pub context: DataContext,
    pub fingerprint: Fingerprint,
}

impl DiffusionModel {
    pub fn data_dim(&self) -> usize {
        self.denoiser.data_dim
    }

    pub fn timesteps(&self) -> usize {
        self.schedule.timesteps()
    }

    fn check_ready(&self) -> Result<()> {
        if !self.denoiser.net.is_finite() {
            return Err(Error::ModelCorrupt("denoiser weights contain NaN or inf".into()));
        }
        Ok(())
    }

    pub fn check_rows(&self, rows: &EncodedTable) -> Result<()> {
        if rows.encoding != self.context.encoding
            || rows.norm != self.context.norm
            || *rows.schema != self.context.schema
        {
            return Err(Error::Encoding(
                "rows are not encoded in the model's data context".into(),
            ));
        }
        Ok(())
    }

    /// ε̂ for a single noisy row.
    pub fn denoise(&self, x_t: ArrayView1<f64>, t: usize) -> Result<Array1<f64>> {
        self.check_ready()?;
        self.schedule.check_t(t)?;
        if x_t.len() != self.data_dim() {
            return Err(Error::Dimension {
                expected: self.data_dim(),
                got: x_t.len(),
            });
        }
        let out = self.denoiser.predict(x_t.insert_axis(Axis(0)), &[t]);
        Ok(out.row(0).to_owned())
    }

    /// `‖denoise(forward_noise(x0, t, ε), t) − ε‖²`.
    pub fn loss_feature(&self, x0: ArrayView1<f64>, t: usize, epsilon: ArrayView1<f64>) -> Result<f64> {
        if x0.len() != self.data_dim() || epsilon.len() != self.data_dim() {
            return Err(Error::Dimension {
                expected: self.data_dim(),
                got: if x0.len() != self.data_dim() { x0.len() } else { epsilon.len() },
            });
        }
        let x_t = self.schedule.forward_noise(x0, t, epsilon)?;
        let eps_hat = self.denoise(x_t.view(), t)?;
        Ok((&eps_hat - &epsilon).mapv(|v| v * v).sum())
    }

    /// Loss features for every `(row, ε_j, t_k)`; column `j·|ts| + k`.
    pub fn loss_grid(
        &self,
        rows: ArrayView2<f64>,
        epsilons: ArrayView2<f64>,
        timesteps: &[usize],
    ) -> Result<Array2<f64>> {
        self.check_ready()?;
        let d = self.data_dim();
        if rows.ncols() != d {
            return Err(Error::Dimension {
                expected: d,
                got: rows.ncols(),
            });
        }
        if epsilons.ncols() != d {
            return Err(Error::Dimension {
                expected: d,
                got: epsilons.ncols(),
            });
        }
        for &t in timesteps {
            self.schedule.check_t(t)?;
        }
        let k = epsilons.nrows();
        let nt = timesteps.len();
        let chunk = (512 / k.max(1)).max(1);
        let blocks: Vec<Array2<f64>> = (0..rows.nrows())
            .step_by(chunk)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|start| {
                let end = (start + chunk).min(rows.nrows());
                let m = end - start;
                let mut out = Array2::zeros((m, k * nt));
                let mut x_t = Array2::zeros((m * k, d));
                for (ti, &t) in timesteps.iter().enumerate() {
                    let (a, b) = self.schedule.coefficients(t);
                    for i in 0..m {
                        let x0 = rows.row(start + i);
                        for j in 0..k {
                            let mut dst = x_t.row_mut(i * k + j);
                            dst.assign(&x0);
                            dst *= a;
                            dst.scaled_add(b, &epsilons.row(j));
                        }
                    }
                    let ts = vec![t; m * k];
                    let eps_hat = self.denoiser.predict(x_t.view(), &ts);
                    for i in 0..m {
                        for j in 0..k {
                            let loss: f64 = eps_hat
                                .row(i * k + j)
                                .iter()
                                .zip(epsilons.row(j).iter())
                                .map(|(p, e)| (p - e) * (p - e))
                                .sum();
                            out[[i, j * nt + ti]] = loss;
                        }
                    }
                }
                out
            })
            .collect();
        let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
        if views.is_empty() {
            return Ok(Array2::zeros((0, k * nt)));
        }
        Ok(ndarray::concatenate(Axis(0), &views).expect("blocks share column count"))
    }
}

pub(crate) fn require_model_space(data: &EncodedTable) -> Result<()> {
    if data.encoding != Encoding::OneHot || data.norm != NumericNorm::MinMax01 {
        return Err(Error::Encoding(
            "diffusion models train on one-hot, minmax_01 encoded tables".into(),
        ));
    }
    Ok(())
}
