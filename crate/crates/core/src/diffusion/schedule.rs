use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear β schedule with cumulative products `alpha_bar[t] = ∏_{s≤t} (1 − β_s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub betas: Vec<f64>,
    pub alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// β runs linearly from `1e-4·(1000/T)` to `0.02·(1000/T)`, clipped to
    /// `(0, 0.999]`.
    pub fn linear(timesteps: usize) -> Result<Self> {
        if timesteps < 1 {
            return Err(Error::Config("diffusion needs at least one timestep".into()));
        }
        let scale = 1000.0 / timesteps as f64;
        let (start, end) = (1e-4 * scale, 0.02 * scale);
        let betas: Vec<f64> = if timesteps == 1 {
            vec![start]
        } else {
            (0..timesteps)
                .map(|i| start + (end - start) * i as f64 / (timesteps - 1) as f64)
                .collect()
        };
        Ok(Self::from_betas(betas.into_iter().map(|b| b.clamp(1e-12, 0.999)).collect()))
    }

    pub fn from_betas(betas: Vec<f64>) -> Self {
        let mut alpha_bar = Vec::with_capacity(betas.len());
        let mut acc = 1.0;
        for &b in &betas {
            acc *= 1.0 - b;
            alpha_bar.push(acc);
        }
        Self { betas, alpha_bar }
    }

    pub fn timesteps(&self) -> usize {
        self.betas.len()
    }

    pub fn check_t(&self, t: usize) -> Result<()> {
        if t >= self.timesteps() {
            return Err(Error::Index {
                index: t,
                len: self.timesteps(),
            });
        }
        Ok(())
    }

    /// `√ᾱ_t·x0 + √(1−ᾱ_t)·ε`.
    pub fn forward_noise(
        &self,
        x0: ArrayView1<f64>,
        t: usize,
        epsilon: ArrayView1<f64>,
    ) -> Result<Array1<f64>> {
        self.check_t(t)?;
        if x0.len() != epsilon.len() {
            return Err(Error::Dimension {
                expected: x0.len(),
                got: epsilon.len(),
            });
        }
        let (a, b) = self.coefficients(t);
        Ok(&x0 * a + &epsilon * b)
    }

    /// `(√ᾱ_t, √(1−ᾱ_t))`.
    pub fn coefficients(&self, t: usize) -> (f64, f64) {
        let ab = self.alpha_bar[t];
        (ab.sqrt(), (1.0 - ab).sqrt())
    }
}
