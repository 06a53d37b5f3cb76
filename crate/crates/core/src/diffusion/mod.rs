//! Data-space Gaussian diffusion over encoded tables.
//!
//! Categorical columns are diffused as Gaussian noise over their one-hot
//! blocks and snapped back by argmax when sampling. `alpha_bar` is the
//! cumulative product of `1 − β`.

mod model;
mod persist;
mod sample;
mod schedule;
mod train;

pub use model::{time_embedding, Denoiser, DiffusionModel, DiffusionSpec, Fingerprint, TrainConfig};
pub use persist::FORMAT_VERSION;
pub use sample::{prior_draw, sample, sample_raw};
pub use schedule::NoiseSchedule;
pub use train::{continue_training, evaluation_loss, initialize, train};
