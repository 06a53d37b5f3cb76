use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::model::{require_model_space, Denoiser, DiffusionModel, DiffusionSpec, Fingerprint, TrainConfig};
use super::schedule::NoiseSchedule;
use crate::dataset::EncodedTable;
use crate::error::{Error, Result};
use crate::nn::Adam;
use crate::seed;

/// Trains a fresh denoiser on `data` with seeded initialization.
pub fn train(data: &EncodedTable, spec: &DiffusionSpec, cfg: &TrainConfig) -> Result<DiffusionModel> {
    require_model_space(data)?;
    let model = initialize(data, spec, cfg.seed)?;
    continue_training(model, data, cfg)
}

/// The untrained model `train` would start from.
pub fn initialize(data: &EncodedTable, spec: &DiffusionSpec, seed_value: u64) -> Result<DiffusionModel> {
    require_model_space(data)?;
    let schedule = NoiseSchedule::linear(spec.timesteps)?;
    let mut rng = seed::derived_rng(seed_value, "diffusion/init", 0);
    let denoiser = Denoiser::new(spec, data.dim(), &mut rng);
    Ok(DiffusionModel {
        spec: spec.clone(),
        schedule,
        denoiser,
        context: data.context(),
        fingerprint: Fingerprint {
            config_hash: String::new(),
            data_hash: String::new(),
            seed: seed_value,
        },
    })
}

/// Runs `cfg.steps` Adam updates on an existing model (fresh optimizer
/// state). Used directly for fine-tuning.
pub fn continue_training(
    mut model: DiffusionModel,
    data: &EncodedTable,
    cfg: &TrainConfig,
) -> Result<DiffusionModel> {
    cfg.validate()?;
    model.check_rows(data)?;
    if data.n_rows() == 0 {
        return Err(Error::Config("cannot train on an empty table".into()));
    }
    let n = data.n_rows();
    let d = data.dim();
    let timesteps = model.timesteps();
    let batch = cfg.batch_size;
    let mut rng = seed::derived_rng(cfg.seed, "diffusion/train", 0);
    let mut adam = Adam::new(&model.denoiser.net, cfg.learning_rate, cfg.adam);
    let mut last_finite = f64::NAN;
    let mut x_t = Array2::zeros((batch, d));
    let mut eps = Array2::zeros((batch, d));
    let mut ts = vec![0usize; batch];
    for step in 0..cfg.steps {
        for r in 0..batch {
            let row = rng.gen_range(0..n);
            let t = rng.gen_range(0..timesteps);
            ts[r] = t;
            let (a, b) = model.schedule.coefficients(t);
            for c in 0..d {
                let e: f64 = StandardNormal.sample(&mut rng);
                eps[[r, c]] = e;
                x_t[[r, c]] = a * data.matrix[[row, c]] + b * e;
            }
        }
        let (loss, grads) = model.denoiser.loss_and_gradients(x_t.view(), &ts, eps.view());
        if !loss.is_finite() {
            return Err(Error::Train {
                step,
                last_finite_loss: last_finite,
            });
        }
        last_finite = loss;
        adam.update(&mut model.denoiser.net, &grads);
    }
    if !model.denoiser.net.is_finite() {
        return Err(Error::Train {
            step: cfg.steps,
            last_finite_loss: last_finite,
        });
    }
    model.fingerprint = fingerprint(&model, data, cfg);
    Ok(model)
}

fn fingerprint(model: &DiffusionModel, data: &EncodedTable, cfg: &TrainConfig) -> Fingerprint {
    let mut config = serde_json::to_vec(&model.spec).expect("spec serializes");
    config.extend(serde_json::to_vec(cfg).expect("config serializes"));
    // chained fine-tunes fold the parent's hash in
    config.extend(model.fingerprint.config_hash.as_bytes());
    let mut bytes = Vec::with_capacity(data.matrix.len() * 8);
    for v in data.matrix.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    Fingerprint {
        config_hash: seed::hex_digest(&config),
        data_hash: seed::hex_digest(&bytes),
        seed: cfg.seed,
    }
}

/// Mean ε-prediction loss over `draws` fixed `(t, ε)` pairs per row; the
/// draws depend only on `seed_value`, so the value is comparable across
/// training checkpoints.
pub fn evaluation_loss(
    model: &DiffusionModel,
    data: &EncodedTable,
    draws: usize,
    seed_value: u64,
) -> Result<f64> {
    model.check_rows(data)?;
    let d = data.dim();
    let mut rng = seed::derived_rng(seed_value, "diffusion/eval", 0);
    let total = data.n_rows() * draws;
    let mut x_t = Array2::zeros((total, d));
    let mut eps = Array2::zeros((total, d));
    let mut ts = vec![0usize; total];
    for r in 0..data.n_rows() {
        for k in 0..draws {
            let i = r * draws + k;
            let t = rng.gen_range(0..model.timesteps());
            ts[i] = t;
            let (a, b) = model.schedule.coefficients(t);
            for c in 0..d {
                let e: f64 = StandardNormal.sample(&mut rng);
                eps[[i, c]] = e;
                x_t[[i, c]] = a * data.matrix[[r, c]] + b * e;
            }
        }
    }
    let pred = model.denoiser.predict(x_t.view(), &ts);
    Ok((&pred - &eps).mapv(|v| v * v).sum() / total as f64)
}
