use ndarray::{s, Array2};
use rand_distr::{Distribution, StandardNormal};

use super::model::DiffusionModel;
use crate::dataset::{argmax, ColumnKind, EncodedTable};
use crate::error::{Error, Result};
use crate::seed;

/// The `x_T ~ N(0, I)` draw that [`sample`] starts from.
pub fn prior_draw(n: usize, dim: usize, seed_value: u64) -> Array2<f64> {
    let mut rng = seed::derived_rng(seed_value, "diffusion/prior", 0);
    Array2::from_shape_simple_fn((n, dim), || StandardNormal.sample(&mut rng))
}

/// DDPM ancestral sampling without post-processing.
pub fn sample_raw(model: &DiffusionModel, n: usize, seed_value: u64) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::Config("sample size must be at least 1".into()));
    }
    if !model.denoiser.net.is_finite() {
        return Err(Error::ModelCorrupt("denoiser weights contain NaN or inf".into()));
    }
    let d = model.data_dim();
    let mut x = prior_draw(n, d, seed_value);
    let mut rng = seed::derived_rng(seed_value, "diffusion/reverse", 0);
    let sched = &model.schedule;
    for t in (0..model.timesteps()).rev() {
        let eps_hat = model.denoiser.predict(x.view(), &vec![t; n]);
        let beta = sched.betas[t];
        let alpha = 1.0 - beta;
        let coef = beta / (1.0 - sched.alpha_bar[t]).sqrt();
        x = (&x - &(eps_hat * coef)) / alpha.sqrt();
        if t > 0 {
            // posterior variance β̃_t
            let var = beta * (1.0 - sched.alpha_bar[t - 1]) / (1.0 - sched.alpha_bar[t]);
            let sd = var.sqrt();
            x.mapv_inplace(|v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + sd * z
            });
        }
    }
    Ok(x)
}

/// Samples `n` rows in the model's data context: numeric coordinates are
/// clipped to `[0, 1]` and each one-hot block is snapped to its argmax.
pub fn sample(model: &DiffusionModel, n: usize, seed_value: u64) -> Result<EncodedTable> {
    let mut table = EncodedTable::with_matrix(&model.context, sample_raw(model, n, seed_value)?)?;
    for (col, block) in table.schema.columns.iter().zip(&table.blocks) {
        match col.kind {
            ColumnKind::Numerical { .. } => {
                table
                    .matrix
                    .column_mut(block.start)
                    .mapv_inplace(|v| v.clamp(0.0, 1.0));
            }
            ColumnKind::Categorical { .. } => {
                for mut row in table.matrix.rows_mut() {
                    let mut seg = row.slice_mut(s![block.range()]);
                    let hot = argmax(seg.view());
                    seg.fill(0.0);
                    seg[hot] = 1.0;
                }
            }
        }
    }
    Ok(table)
}
