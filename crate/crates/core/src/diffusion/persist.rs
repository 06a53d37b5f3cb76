use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::model::{Denoiser, DiffusionModel, DiffusionSpec, Fingerprint};
use super::schedule::NoiseSchedule;
use crate::dataset::{f32_blob, read_f32_blob, DataContext};
use crate::error::{Error, Result};
use crate::nn::{Activation, Dense, Mlp};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ModelManifest {
    format_version: u32,
    spec: DiffusionSpec,
    schedule: ScheduleParams,
    layer_dims: Vec<usize>,
    activation: Activation,
    context: DataContext,
    fingerprint: Fingerprint,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct ScheduleParams {
    kind: String,
    timesteps: usize,
}

impl DiffusionModel {
    /// Writes `manifest.json` and `weights.bin` (float32 little endian, each
    /// layer's weight then bias, in layer order). Weights are rounded to f32.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut tensors = Vec::new();
        for (i, layer) in self.denoiser.net.layers.iter().enumerate() {
            tensors.push(TensorEntry {
                name: format!("layer{i}.weight"),
                shape: vec![layer.input_dim(), layer.output_dim()],
            });
            tensors.push(TensorEntry {
                name: format!("layer{i}.bias"),
                shape: vec![layer.output_dim()],
            });
        }
        let manifest = ModelManifest {
            format_version: FORMAT_VERSION,
            spec: self.spec.clone(),
            schedule: ScheduleParams {
                kind: "linear".into(),
                timesteps: self.timesteps(),
            },
            layer_dims: self.denoiser.net.dims(),
            activation: self.denoiser.net.hidden,
            context: self.context.clone(),
            fingerprint: self.fingerprint.clone(),
            tensors,
        };
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
        let values = self
            .denoiser
            .net
            .layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied());
        let path = dir.join("weights.bin");
        fs::write(&path, f32_blob(values)).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<DiffusionModel> {
        let path = dir.join("manifest.json");
        let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: ModelManifest = serde_json::from_slice(&text)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::ModelCorrupt(format!(
                "unsupported model format version {}",
                manifest.format_version
            )));
        }
        let dims = &manifest.layer_dims;
        let data_dim = manifest.context.dim();
        if dims.len() < 2 || *dims.last().expect("non-empty") != data_dim {
            return Err(Error::ModelCorrupt("layer dims do not match data context".into()));
        }
        let total: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let path = dir.join("weights.bin");
        let blob = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let values = read_f32_blob(&blob, total).map_err(|e| Error::ModelCorrupt(e.to_string()))?;
        let mut offset = 0;
        let mut layers = Vec::new();
        for w in dims.windows(2) {
            let (i, o) = (w[0], w[1]);
            let weight = Array2::from_shape_vec((i, o), values[offset..offset + i * o].to_vec())
                .expect("sized by dims");
            offset += i * o;
            let bias = Array1::from(values[offset..offset + o].to_vec());
            offset += o;
            layers.push(Dense { weight, bias });
        }
        let schedule = NoiseSchedule::linear(manifest.schedule.timesteps)?;
        Ok(DiffusionModel {
            spec: manifest.spec.clone(),
            schedule,
            denoiser: Denoiser {
                net: Mlp {
                    layers,
                    hidden: manifest.activation,
                    output: Activation::Identity,
                },
                data_dim,
                time_embed_dim: manifest.spec.time_embed_dim,
            },
            context: manifest.context,
            fingerprint: manifest.fingerprint,
        })
    }
}
