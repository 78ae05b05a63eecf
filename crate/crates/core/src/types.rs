//! Frame and video containers shared by every module.

use std::collections::HashMap;
use std::path::Path;

use safetensors::tensor::TensorView;
use safetensors::{Dtype, SafeTensors};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Geometry of a single frame. Pixel values live in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FrameSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl FrameSpec {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    /// 64×64 single-channel frames.
    pub const fn mmnist() -> Self {
        Self::new(1, 64, 64)
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [("channels", self.channels), ("height", self.height), ("width", self.width)] {
            if v == 0 {
                return Err(Error::config(format!("frame_spec.{key}"), "must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.channels * self.height * self.width
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Context,
    Target,
    Prediction,
}

impl Role {
    fn as_str(self) -> &'static str {
        match self {
            Role::Context => "context",
            Role::Target => "target",
            Role::Prediction => "prediction",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "context" => Some(Role::Context),
            "target" => Some(Role::Target),
            "prediction" => Some(Role::Prediction),
            _ => None,
        }
    }
}

/// A batch of clips shaped `(B, T, C, H, W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoBatch {
    data: Tensor<f32>,
    spec: FrameSpec,
    role: Role,
}

impl VideoBatch {
    /// Validates shape against `spec` and values against `role`: context and target
    /// frames must lie in `[0, 1]`, predictions need only be finite.
    pub fn new(data: Tensor<f32>, spec: FrameSpec, role: Role) -> Result<Self> {
        spec.validate()?;
        let s = data.shape();
        if s.len() != 5 || s[2] != spec.channels || s[3] != spec.height || s[4] != spec.width {
            return Err(Error::contract(format!(
                "video batch shape {s:?} does not match (B, T, {}, {}, {})",
                spec.channels, spec.height, spec.width
            )));
        }
        if let Some(v) = data.data().iter().find(|v| !v.is_finite()) {
            return Err(Error::contract(format!("{} batch holds non-finite value {v}", role.as_str())));
        }
        if role != Role::Prediction {
            if let Some(v) = data.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::contract(format!("{} batch holds {v} outside [0, 1]", role.as_str())));
            }
        }
        Ok(Self { data, spec, role })
    }

    pub fn zeros(batch: usize, len: usize, spec: FrameSpec, role: Role) -> Self {
        let data = Tensor::zeros(vec![batch, len, spec.channels, spec.height, spec.width]);
        Self { data, spec, role }
    }

    pub fn data(&self) -> &Tensor<f32> {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor<f32> {
        self.data
    }

    pub fn spec(&self) -> FrameSpec {
        self.spec
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn batch(&self) -> usize {
        self.data.dim(0)
    }

    pub fn len(&self) -> usize {
        self.data.dim(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.numel() == 0
    }

    pub fn shape(&self) -> &[usize] {
        self.data.shape()
    }

    /// Pixels of frame `t` of clip `b`, laid out `(C, H, W)`.
    pub fn frame(&self, b: usize, t: usize) -> &[f32] {
        let n = self.spec.pixels();
        let start = (b * self.len() + t) * n;
        &self.data.data()[start..start + n]
    }

    pub fn frame_mut(&mut self, b: usize, t: usize) -> &mut [f32] {
        let n = self.spec.pixels();
        let start = (b * self.len() + t) * n;
        &mut self.data.data_mut()[start..start + n]
    }

    /// Copy with every value clamped to `[0, 1]`.
    pub fn clamped(&self) -> Self {
        Self { data: self.data.map(|v| v.clamp(0.0, 1.0)), spec: self.spec, role: self.role }
    }

    pub fn with_role(mut self, role: Role) -> Result<Self> {
        if role != Role::Prediction && self.role == Role::Prediction {
            return Self::new(self.data, self.spec, role);
        }
        self.role = role;
        Ok(self)
    }

    /// Stacks single clips (or batches) along the batch axis.
    pub fn concat(parts: &[&VideoBatch]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::contract("concat of no batches"))?;
        let mut data = Vec::new();
        let mut batch = 0;
        for p in parts {
            if p.spec != first.spec || p.len() != first.len() || p.role != first.role {
                return Err(Error::contract("concat of incompatible video batches"));
            }
            data.extend_from_slice(p.data.data());
            batch += p.batch();
        }
        let s = first.shape();
        let data = Tensor::new(vec![batch, s[1], s[2], s[3], s[4]], data);
        Ok(Self { data, spec: first.spec, role: first.role })
    }

    /// Clip `b` as a batch of one.
    pub fn clip(&self, b: usize) -> Self {
        let s = self.shape();
        let data = Tensor::new(vec![1, s[1], s[2], s[3], s[4]], self.data.outer(b).to_vec());
        Self { data, spec: self.spec, role: self.role }
    }

    /// Serializes to an in-memory safetensors container (32-bit floats plus role and spec).
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let bytes: Vec<u8> = self.data.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        let view = TensorView::new(Dtype::F32, self.shape().to_vec(), &bytes)
            .map_err(|e| Error::format("<memory>", e))?;
        let meta = HashMap::from([
            ("role".to_string(), self.role.as_str().to_string()),
            ("frame_spec".to_string(), serde_json::to_string(&self.spec).expect("frame spec serializes")),
        ]);
        safetensors::serialize([("data", view)], Some(meta)).map_err(|e| Error::format("<memory>", e))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::format("<memory>", m);
        let (_, header) = SafeTensors::read_metadata(bytes).map_err(|e| Error::format("<memory>", e))?;
        let meta = header.metadata().as_ref().ok_or_else(|| bad("missing metadata"))?;
        let role = meta.get("role").and_then(|r| Role::parse(r)).ok_or_else(|| bad("missing role"))?;
        let spec: FrameSpec = meta
            .get("frame_spec")
            .and_then(|s| serde_json::from_str(s).ok())
            .ok_or_else(|| bad("missing frame_spec"))?;
        let st = SafeTensors::deserialize(bytes).map_err(|e| Error::format("<memory>", e))?;
        let view = st.tensor("data").map_err(|e| Error::format("<memory>", e))?;
        if view.dtype() != Dtype::F32 {
            return Err(bad("video data must be f32"));
        }
        let data: Vec<f32> = view
            .data()
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(Tensor::new(view.shape().to_vec(), data), spec, role)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format { message, .. } => Error::format(path, message),
            other => other,
        })
    }
}

/// Observed frames and the frames to be predicted.
#[derive(Clone, Debug, PartialEq)]
pub struct SequencePair {
    pub context: VideoBatch,
    pub target: VideoBatch,
}

impl SequencePair {
    pub fn new(context: VideoBatch, target: VideoBatch) -> Result<Self> {
        if context.spec() != target.spec() {
            return Err(Error::contract("context and target frame specs differ"));
        }
        if context.batch() != target.batch() {
            return Err(Error::contract("context and target batch sizes differ"));
        }
        if context.len() == 0 || target.len() == 0 {
            return Err(Error::contract("context and target need at least one frame"));
        }
        Ok(Self { context, target })
    }

    pub fn spec(&self) -> FrameSpec {
        self.context.spec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_context() {
        let t = Tensor::full(vec![1, 1, 1, 2, 2], 1.5f32);
        assert!(VideoBatch::new(t.clone(), FrameSpec::new(1, 2, 2), Role::Context).is_err());
        assert!(VideoBatch::new(t, FrameSpec::new(1, 2, 2), Role::Prediction).is_ok());
    }

    #[test]
    fn rejects_mismatched_spec() {
        let t = Tensor::zeros(vec![1, 1, 3, 2, 2]);
        assert!(VideoBatch::new(t, FrameSpec::new(1, 2, 2), Role::Context).is_err());
    }

    #[test]
    fn frame_indexing() {
        let t = Tensor::from_fn(vec![2, 3, 1, 1, 2], |i| i as f32 / 12.0);
        let v = VideoBatch::new(t, FrameSpec::new(1, 1, 2), Role::Target).unwrap();
        assert_eq!(v.frame(1, 2), &[10.0 / 12.0, 11.0 / 12.0]);
    }
}
