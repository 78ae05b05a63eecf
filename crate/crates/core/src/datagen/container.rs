//! On-disk dataset splits: a safetensors file with 8-bit `context` and `target`
//! arrays plus a JSON sidecar holding the dataset spec and a content hash.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use safetensors::tensor::TensorView;
use safetensors::{Dtype, SafeTensors};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::dataset::{DatasetSpec, Materialized};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub spec: DatasetSpec,
    pub count: usize,
    pub sha256: String,
}

/// `split.safetensors` → `split.safetensors.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn shapes(spec: &DatasetSpec) -> (Vec<usize>, Vec<usize>) {
    let fs = spec.frame_spec;
    (
        vec![spec.count, spec.t, fs.channels, fs.height, fs.width],
        vec![spec.count, spec.t_prime, fs.channels, fs.height, fs.width],
    )
}

/// Writes the split and its sidecar; returns the content hash.
pub fn save(path: &Path, split: &Materialized) -> Result<String> {
    let (cs, ts) = shapes(&split.spec);
    let fmt = |e: safetensors::SafeTensorError| Error::format(path, e);
    let views = vec![
        ("context".to_string(), TensorView::new(Dtype::U8, cs, &split.context).map_err(fmt)?),
        ("target".to_string(), TensorView::new(Dtype::U8, ts, &split.target).map_err(fmt)?),
    ];
    let hash = split.content_hash();
    let meta = HashMap::from([("sha256".to_string(), hash.clone())]);
    let bytes = safetensors::serialize(views, Some(meta)).map_err(fmt)?;
    write_atomic(path, &bytes)?;
    let sidecar = Sidecar { spec: split.spec.clone(), count: split.spec.count, sha256: hash.clone() };
    let json = serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes");
    write_atomic(&sidecar_path(path), &json)?;
    Ok(hash)
}

/// Reads a split, checking shapes against the sidecar and the content hash.
pub fn load(path: &Path) -> Result<Materialized> {
    let side_path = sidecar_path(path);
    let side_bytes = std::fs::read(&side_path).map_err(|e| Error::io(&side_path, e))?;
    let sidecar: Sidecar = serde_json::from_slice(&side_bytes).map_err(|e| Error::format(&side_path, e))?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let st = SafeTensors::deserialize(&bytes).map_err(|e| Error::format(path, e))?;
    let (cs, ts) = shapes(&sidecar.spec);
    let take = |name: &str, shape: Vec<usize>| -> Result<Vec<u8>> {
        let v = st.tensor(name).map_err(|_| Error::format(path, format!("missing array `{name}`")))?;
        if v.dtype() != Dtype::U8 || v.shape() != shape.as_slice() {
            return Err(Error::format(path, format!("array `{name}` is {:?} {:?}, expected U8 {shape:?}", v.dtype(), v.shape())));
        }
        Ok(v.data().to_vec())
    };
    let split = Materialized { spec: sidecar.spec.clone(), context: take("context", cs)?, target: take("target", ts)? };
    let hash = split.content_hash();
    if hash != sidecar.sha256 {
        return Err(Error::format(path, format!("content hash {hash} does not match sidecar {}", sidecar.sha256)));
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{Dataset, Split};

    #[test]
    fn round_trip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.safetensors");
        let m = Dataset::build(DatasetSpec::mmnist(Split::Test, 2, 5)).unwrap().materialize().unwrap();
        let hash = save(&path, &m).unwrap();
        assert_eq!(load(&path).unwrap(), m);
        let side = sidecar_path(&path);
        let text = std::fs::read_to_string(&side).unwrap().replace(&hash, &"0".repeat(64));
        std::fs::write(&side, text).unwrap();
        assert!(load(&path).is_err());
    }
}
