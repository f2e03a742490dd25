//! Parameter checkpoints: a JSON manifest next to a flat binary file.
//!
//! The binary file holds every parameter tensor as little-endian `f64`, in
//! [`GatModel::named_params`] order, with no padding. The manifest records the
//! model configuration, the dimensions of every layer, and the name, shape
//! and byte offset of every tensor. An optional provenance block says which
//! data the parameters were trained on so the evaluation inputs can be rebuilt.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GatModel, LayerParams, ModelConfig};
use crate::dataset::{read_json, write_json, MissingSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FORMAT: &str = "relgat-checkpoint-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerDims {
    pub d_in: usize,
    pub d_out: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset_bytes: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset: String,
    pub missing: MissingSpec,
    pub row_normalize: bool,
    pub seed: u64,
    pub best_epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub model: ModelConfig,
    pub layers: Vec<LayerDims>,
    pub tensors: Vec<TensorEntry>,
    /// Binary file name, relative to the manifest.
    pub data_file: String,
    pub total_bytes: usize,
    pub provenance: Option<Provenance>,
}

/// Binary file path paired with a manifest path (`x.json` → `x.bin`).
pub fn data_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("bin")
}

pub fn save(model: &GatModel, provenance: Option<Provenance>, manifest_path: &Path) -> Result<()> {
    let bin_path = data_path(manifest_path);
    let mut bytes = Vec::with_capacity(model.num_params() * 8);
    let mut tensors = Vec::new();
    for (name, t) in model.named_params() {
        tensors.push(TensorEntry {
            name,
            shape: t.shape().to_vec(),
            offset_bytes: bytes.len(),
            len: t.numel(),
        });
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT.to_string(),
        model: model.config.clone(),
        layers: model
            .layers
            .iter()
            .map(|l| {
                let (d_in, d_out) = l.dims();
                LayerDims { d_in, d_out }
            })
            .collect(),
        tensors,
        data_file: bin_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        total_bytes: bytes.len(),
        provenance,
    };
    if let Some(parent) = manifest_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&bin_path, &bytes).map_err(|e| Error::io(&bin_path, e))?;
    write_json(manifest_path, &manifest)
}

pub fn load(manifest_path: &Path) -> Result<(GatModel, Manifest)> {
    let manifest: Manifest = read_json(manifest_path)?;
    if manifest.format != FORMAT {
        return Err(Error::load(
            manifest_path,
            1,
            format!("unsupported checkpoint format {:?}", manifest.format),
        ));
    }
    let bin_path = manifest_path
        .parent()
        .unwrap_or(Path::new("."))
        .join(&manifest.data_file);
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    if bytes.len() != manifest.total_bytes {
        return Err(Error::load(
            &bin_path,
            0,
            format!(
                "expected {} bytes, found {}",
                manifest.total_bytes,
                bytes.len()
            ),
        ));
    }
    let read_tensor = |entry: &TensorEntry| -> Result<Tensor> {
        let end = entry.offset_bytes + entry.len * 8;
        let chunk = bytes
            .get(entry.offset_bytes..end)
            .ok_or_else(|| Error::load(&bin_path, 0, format!("{} out of bounds", entry.name)))?;
        let data = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        Tensor::new(entry.shape.clone(), data)
    };
    let find = |name: &str| manifest.tensors.iter().find(|e| e.name == name);

    let mut layers = Vec::with_capacity(manifest.layers.len());
    for l in 0..manifest.layers.len() {
        let get = |suffix: &str| -> Result<Tensor> {
            let name = format!("layer{l}.{suffix}");
            let entry = find(&name)
                .ok_or_else(|| Error::load(manifest_path, 1, format!("missing tensor {name}")))?;
            read_tensor(entry)
        };
        let w_rel = match find(&format!("layer{l}.w_rel")) {
            Some(entry) => Some(read_tensor(entry)?),
            None => None,
        };
        let layer = LayerParams {
            w_self: get("w_self")?,
            w_rel,
            attn: get("attn")?,
        };
        let dims = &manifest.layers[l];
        if layer.dims() != (dims.d_in, dims.d_out) {
            return Err(Error::load(
                manifest_path,
                1,
                format!("layer {l} dimensions disagree with its tensors"),
            ));
        }
        layers.push(layer);
    }
    let model = GatModel::from_layers(manifest.model.clone(), layers)?;
    Ok((model, manifest))
}
