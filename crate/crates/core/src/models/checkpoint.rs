//! Model checkpoints: a safetensors file mapping parameter paths to 32-bit arrays,
//! with the model name, config and format version in the header metadata.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use safetensors::tensor::TensorView;
use safetensors::{Dtype, SafeTensors};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{Model, ModelConfig, Registry};

pub const FORMAT_VERSION: &str = "1";

fn ckpt_err(path: &Path, message: impl std::fmt::Display) -> Error {
    Error::Checkpoint { path: path.to_path_buf(), message: message.to_string() }
}

/// Serializes `model` into checkpoint bytes.
pub fn to_bytes(model: &Model<f32>, extra: &[(&str, String)]) -> Result<Vec<u8>> {
    let buffers: Vec<(String, Vec<usize>, Vec<u8>)> = model
        .params
        .iter()
        .map(|(name, t)| (name.to_string(), t.shape().to_vec(), t.data().iter().flat_map(|v| v.to_le_bytes()).collect()))
        .collect();
    let views = buffers
        .iter()
        .map(|(name, shape, bytes)| {
            TensorView::new(Dtype::F32, shape.clone(), bytes).map(|v| (name.clone(), v))
        })
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::format("<checkpoint>", e))?;
    let mut meta: HashMap<String, String> = HashMap::from([
        ("format_version".into(), FORMAT_VERSION.into()),
        ("model_name".into(), model.name.clone()),
        ("model_config".into(), serde_json::to_string(&model.config).expect("config serializes")),
    ]);
    for (k, v) in extra {
        meta.insert((*k).to_string(), v.clone());
    }
    safetensors::serialize(views, Some(meta)).map_err(|e| Error::format("<checkpoint>", e))
}

/// Writes a checkpoint atomically: the bytes go to a sibling temporary file which is
/// then renamed over `path`, so an interrupted write never clobbers the previous file.
pub fn save(model: &Model<f32>, path: &Path, extra: &[(&str, String)]) -> Result<()> {
    let bytes = to_bytes(model, extra)?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| ckpt_err(&tmp, e))?;
    f.sync_all().map_err(|e| ckpt_err(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| ckpt_err(path, e))
}

/// Header metadata of a checkpoint.
pub fn read_metadata(bytes: &[u8]) -> Result<HashMap<String, String>> {
    let (_, header) = SafeTensors::read_metadata(bytes).map_err(|e| Error::format("<checkpoint>", e))?;
    Ok(header.metadata().clone().unwrap_or_default())
}

pub fn from_bytes(bytes: &[u8], registry: &Registry) -> Result<Model<f32>> {
    let path = Path::new("<checkpoint>");
    let meta = read_metadata(bytes)?;
    match meta.get("format_version").map(String::as_str) {
        Some(FORMAT_VERSION) => {}
        other => return Err(ckpt_err(path, format!("unsupported format version {other:?}"))),
    }
    let name = meta.get("model_name").ok_or_else(|| ckpt_err(path, "missing model_name"))?;
    let config: ModelConfig = meta
        .get("model_config")
        .ok_or_else(|| ckpt_err(path, "missing model_config"))
        .and_then(|s| serde_json::from_str(s).map_err(|e| ckpt_err(path, e)))?;
    let mut model = registry.build(name, &config, 0)?;
    let st = SafeTensors::deserialize(bytes).map_err(|e| ckpt_err(path, e))?;
    if st.len() != model.params.len() {
        return Err(ckpt_err(path, format!("{} tensors stored, model has {}", st.len(), model.params.len())));
    }
    let ids: Vec<_> = model.params.ids().collect();
    for id in ids {
        let pname = model.params.name(id).to_string();
        let view = st.tensor(&pname).map_err(|_| ckpt_err(path, format!("missing tensor {pname}")))?;
        if view.dtype() != Dtype::F32 || view.shape() != model.params.get(id).shape() {
            return Err(ckpt_err(path, format!("tensor {pname} has wrong dtype or shape {:?}", view.shape())));
        }
        let data = view.data().chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        model.params.set(id, Tensor::new(view.shape().to_vec(), data));
    }
    Ok(model)
}

pub fn load(path: &Path, registry: &Registry) -> Result<Model<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, registry).map_err(|e| match e {
        Error::Checkpoint { message, .. } | Error::Format { message, .. } => ckpt_err(path, message),
        other => other,
    })
}
