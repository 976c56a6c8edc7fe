//! Portable checkpoint directories.
//!
//! ```text
//! <dir>/manifest.json    UTF-8 JSON, format_version "1"
//! <dir>/layer_000.bin    raw little-endian f32: weight (row-major) then bias
//! <dir>/layer_003.bin    ... one file per layer that has parameters,
//!                        named by the layer's index in the stack
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{layer_names, param_shapes, LayerParams, LayerSpec, ParamSet, Tensor};
use crate::seq2point::Seq2PointModel;
use crate::windowing::NormalizationParams;

pub const FORMAT_VERSION: &str = "1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationEntry {
    pub mains: NormalizationParams,
    pub appliance: NormalizationParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub index: usize,
    pub name: String,
    #[serde(flatten)]
    pub spec: LayerSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_shape: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_shape: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

/// Where a checkpoint came from. Every field is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workflow: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopped_epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_appliance: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: String,
    pub appliance: String,
    pub window_length: usize,
    pub period: i64,
    pub normalization: NormalizationEntry,
    pub layers: Vec<LayerEntry>,
    #[serde(default)]
    pub provenance: Provenance,
}

fn layer_file(index: usize) -> String {
    format!("layer_{index:03}.bin")
}

impl Manifest {
    pub fn describe(model: &Seq2PointModel, provenance: Provenance) -> Self {
        let shapes = param_shapes(model.specs(), model.window_length())
            .expect("model shape algebra is valid");
        let layers = model
            .specs()
            .iter()
            .zip(layer_names(model.specs()))
            .zip(shapes)
            .enumerate()
            .map(|(index, ((spec, name), shape))| {
                let (weight_shape, bias_shape) = match shape {
                    Some((w, b)) => (Some(w), Some(b)),
                    None => (None, None),
                };
                LayerEntry {
                    index,
                    name,
                    spec: *spec,
                    file: weight_shape.as_ref().map(|_| layer_file(index)),
                    weight_shape,
                    bias_shape,
                }
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION.to_string(),
            appliance: model.appliance().to_string(),
            window_length: model.window_length(),
            period: model.period(),
            normalization: NormalizationEntry {
                mains: model.mains_norm(),
                appliance: model.appliance_norm(),
            },
            layers,
            provenance,
        }
    }
}

/// A model together with the manifest it was saved or loaded with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub model: Seq2PointModel,
}

impl Checkpoint {
    pub fn new(model: Seq2PointModel, provenance: Provenance) -> Self {
        Self {
            manifest: Manifest::describe(&model, provenance),
            model,
        }
    }

    /// Writes parameter files first and the manifest last.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (entry, params) in self.manifest.layers.iter().zip(&self.model.params().layers) {
            let (Some(file), Some(p)) = (&entry.file, params) else {
                continue;
            };
            let mut bytes = Vec::with_capacity(4 * p.len());
            for v in p.weight.data().iter().chain(p.bias.data()) {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            let path = dir.join(file);
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        let mut json = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        json.push('\n');
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    /// Reads and fully validates a checkpoint directory. Nothing is returned
    /// unless every layer checks out.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("corrupt manifest: {e}")))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version `{}`",
                manifest.format_version
            )));
        }
        let specs: Vec<LayerSpec> = manifest.layers.iter().map(|l| l.spec).collect();
        for (i, entry) in manifest.layers.iter().enumerate() {
            if entry.index != i {
                return Err(Error::CheckpointLayer {
                    layer: i,
                    reason: format!("listed with index {}", entry.index),
                });
            }
        }
        let expected = param_shapes(&specs, manifest.window_length)
            .map_err(|e| Error::Checkpoint(format!("layer table: {e}")))?;

        let mut layers = Vec::with_capacity(specs.len());
        for (i, (entry, shape)) in manifest.layers.iter().zip(expected).enumerate() {
            let bad = |reason: String| Error::CheckpointLayer { layer: i, reason };
            let Some((w_shape, b_shape)) = shape else {
                if entry.file.is_some() || entry.weight_shape.is_some() {
                    return Err(bad("parameters listed for a layer without any".into()));
                }
                layers.push(None);
                continue;
            };
            if entry.weight_shape.as_ref() != Some(&w_shape) || entry.bias_shape.as_ref() != Some(&b_shape) {
                return Err(bad(format!(
                    "manifest shapes {:?}/{:?} disagree with the stack ({w_shape:?}/{b_shape:?})",
                    entry.weight_shape, entry.bias_shape
                )));
            }
            let file = entry.file.as_ref().ok_or_else(|| bad("no parameter file".into()))?;
            if file.contains(['/', '\\']) || file.starts_with('.') {
                return Err(bad(format!("parameter file name `{file}` is not a plain name")));
            }
            let bytes = fs::read(dir.join(file)).map_err(|e| bad(format!("cannot read {file}: {e}")))?;
            let n_w: usize = w_shape.iter().product();
            let n_b: usize = b_shape.iter().product();
            if bytes.len() != 4 * (n_w + n_b) {
                return Err(bad(format!(
                    "{file} holds {} bytes, expected {}",
                    bytes.len(),
                    4 * (n_w + n_b)
                )));
            }
            let values: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let weight = Tensor::new(w_shape, values[..n_w].to_vec()).map_err(|e| bad(e.to_string()))?;
            let bias = Tensor::new(b_shape, values[n_w..].to_vec()).map_err(|e| bad(e.to_string()))?;
            layers.push(Some(LayerParams { weight, bias }));
        }
        let model = Seq2PointModel::from_parts(
            specs,
            ParamSet { layers },
            manifest.window_length,
            manifest.period,
            manifest.normalization.mains,
            manifest.normalization.appliance,
            manifest.appliance.clone(),
        )
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Self { manifest, model })
    }
}

pub fn save_checkpoint(model: &Seq2PointModel, dir: &Path) -> Result<()> {
    Checkpoint::new(model.clone(), Provenance::default()).save(dir)
}

pub fn load_checkpoint(dir: &Path) -> Result<Seq2PointModel> {
    Checkpoint::load(dir).map(|c| c.model)
}
