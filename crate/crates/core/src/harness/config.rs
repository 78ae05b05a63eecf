//! Experiment configuration: YAML files, overrides, resolution and hashing.

use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::{DatasetSpec, PerturbationKind, PerturbationSpec, Split, SpriteSource, Variant};
use crate::error::{Error, Result};
use crate::metrics::FpsProtocol;
use crate::models::{ModelConfig, Registry};
use crate::rng::SeedSpec;
use crate::types::FrameSpec;

pub const ENV_DATA_ROOT: &str = "MINISTL_DATA_ROOT";
pub const ENV_DEVICE: &str = "MINISTL_DEVICE";

/// Learning rates of the reference sweep.
pub const LR_GRID: [f64; 5] = [1e-2, 5e-3, 1e-3, 5e-4, 1e-4];
/// Stochastic-depth rates of the reference sweep.
pub const DROP_PATH_GRID: [f64; 3] = [0.0, 0.1, 0.2];

/// A registered model name plus optional architecture overrides. Frame geometry
/// and sequence lengths come from the data section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub name: String,
    #[serde(rename = "hid_S", default, skip_serializing_if = "Option::is_none")]
    pub hid_s: Option<usize>,
    #[serde(rename = "hid_T", default, skip_serializing_if = "Option::is_none")]
    pub hid_t: Option<usize>,
    #[serde(rename = "N_S", default, skip_serializing_if = "Option::is_none")]
    pub n_s: Option<usize>,
    #[serde(rename = "N_T", default, skip_serializing_if = "Option::is_none")]
    pub n_t: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mlp_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rnn_layers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rnn_hidden: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rnn_kernel: Option<usize>,
    /// Load weights from this checkpoint instead of training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

impl ModelEntry {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            hid_s: None,
            hid_t: None,
            n_s: None,
            n_t: None,
            mlp_ratio: None,
            rnn_layers: None,
            rnn_hidden: None,
            rnn_kernel: None,
            checkpoint: None,
        }
    }

    /// Full model config: registry defaults, then overrides, then data geometry.
    pub fn resolve(&self, registry: &Registry, data: &DataConfig, drop_path: f64) -> Result<ModelConfig> {
        let entry = registry.get(&self.name).ok_or_else(|| Error::Registry(format!("unknown model `{}`", self.name)))?;
        let mut cfg = ModelConfig::mmnist(entry.kind, entry.mixer);
        let set = |dst: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut cfg.hid_s, self.hid_s);
        set(&mut cfg.hid_t, self.hid_t);
        set(&mut cfg.n_s, self.n_s);
        set(&mut cfg.n_t, self.n_t);
        set(&mut cfg.rnn_layers, self.rnn_layers);
        set(&mut cfg.rnn_hidden, self.rnn_hidden);
        set(&mut cfg.rnn_kernel, self.rnn_kernel);
        if let Some(r) = self.mlp_ratio {
            cfg.mlp_ratio = r;
        }
        cfg.frame_spec = data.frame_spec();
        cfg.t = data.t;
        cfg.t_prime = data.t_prime;
        cfg.drop_path = drop_path;
        registry.resolve_config(&self.name, &cfg)
    }
}

fn default_variant() -> Variant {
    Variant::Mnist
}
fn default_train_count() -> usize {
    10_000
}
fn default_test_count() -> usize {
    10_000
}
fn default_len() -> usize {
    10
}
fn default_size() -> usize {
    64
}
fn default_objects() -> usize {
    2
}
fn default_speed() -> [f64; 2] {
    [2.0, 5.0]
}
fn default_source() -> SpriteSource {
    SpriteSource::Procedural
}
fn default_val_fraction() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default = "default_train_count")]
    pub train_count: usize,
    #[serde(default = "default_test_count")]
    pub test_count: usize,
    /// Canvas height and width in pixels.
    #[serde(default = "default_size")]
    pub size: usize,
    #[serde(rename = "T", default = "default_len")]
    pub t: usize,
    #[serde(rename = "T_prime", default = "default_len")]
    pub t_prime: usize,
    #[serde(default = "default_objects")]
    pub num_objects: usize,
    #[serde(default = "default_speed")]
    pub speed_range: [f64; 2],
    #[serde(default = "default_source")]
    pub source: SpriteSource,
    /// Fraction of the training clips (taken from the end) held out for validation.
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    /// Pre-built test split in the dataset container format; overrides generation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_path: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        serde_yaml::from_str("{}").expect("all fields defaulted")
    }
}

impl DataConfig {
    pub fn frame_spec(&self) -> FrameSpec {
        FrameSpec::new(self.variant.channels(), self.size, self.size)
    }

    pub fn dataset_spec(&self, split: Split, master_seed: u64) -> DatasetSpec {
        DatasetSpec {
            variant: self.variant,
            split,
            count: if split == Split::Train { self.train_count } else { self.test_count },
            frame_spec: self.frame_spec(),
            t: self.t,
            t_prime: self.t_prime,
            num_objects: self.num_objects,
            speed_range: self.speed_range,
            seed: SeedSpec::new(master_seed, 0),
            source: self.source.clone(),
        }
    }

    /// Training and validation index ranges of the training split.
    pub fn train_val_split(&self) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let n = self.train_count;
        let val = if n >= 2 { ((n as f64 * self.val_fraction).round() as usize).clamp(1, n - 1) } else { 0 };
        (0..n - val, n - val..n)
    }
}

fn default_epochs() -> usize {
    200
}
fn default_batch() -> usize {
    16
}
fn default_lr() -> f64 {
    1e-3
}
fn default_betas() -> [f64; 2] {
    [0.9, 0.999]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_betas")]
    pub betas: [f64; 2],
    #[serde(default)]
    pub drop_path: f64,
    /// Sweep the reference learning-rate × drop-path grid and keep the best run.
    #[serde(default)]
    pub grid: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        serde_yaml::from_str("{}").expect("all fields defaulted")
    }
}

fn default_strips() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FpsSettings {
    pub warmup: usize,
    pub timed: usize,
    pub batch: usize,
}

impl Default for FpsSettings {
    fn default() -> Self {
        let p = FpsProtocol::default();
        Self { warmup: p.warmup, timed: p.timed, batch: p.batch }
    }
}

impl FpsSettings {
    pub fn protocol(&self) -> FpsProtocol {
        FpsProtocol { warmup: self.warmup, timed: self.timed, batch: self.batch }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct BenchSettings {
    /// Models to compare; absent means the top-level model only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<Vec<ModelEntry>>,
    /// Perturbed evaluation conditions added to the clean one.
    #[serde(default)]
    pub perturbations: Vec<PerturbationKind>,
    /// Number of sample clips rendered as strip images per model.
    #[serde(default = "default_strips")]
    pub strips: usize,
    #[serde(default)]
    pub fps: FpsSettings,
    /// Skip throughput measurement.
    #[serde(default)]
    pub skip_fps: bool,
}

impl Default for BenchSettings {
    fn default() -> Self {
        serde_yaml::from_str("{}").expect("all fields defaulted")
    }
}

fn default_seed() -> u64 {
    42
}
fn default_device() -> String {
    "cpu".into()
}
fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

/// A complete experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelEntry,
    #[serde(default)]
    pub data: DataConfig,
    /// Applied to the training and evaluation data of `train` / `eval`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationSpec>,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub bench: BenchSettings,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_device")]
    pub device: String,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

/// Command-line and environment overrides, applied in that order of precedence.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub device: Option<String>,
    pub epochs: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_yaml(text: &str) -> Result<Self> {
        serde_yaml::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let key = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.contains("unknown field") || msg.contains("missing field"))
                .unwrap_or("<document>")
                .to_string();
            Error::config(key, msg)
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_yaml(&text)
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("config serializes")
    }

    /// Applies environment variables, then explicit overrides, and validates.
    pub fn resolve(mut self, overrides: &Overrides, env: impl Fn(&str) -> Option<String>) -> Result<Self> {
        if let Some(root) = env(ENV_DATA_ROOT) {
            if let SpriteSource::Files { root: r } = &mut self.data.source {
                *r = PathBuf::from(root);
            }
        }
        if let Some(dev) = env(ENV_DEVICE) {
            self.device = dev;
        }
        if let Some(s) = overrides.seed {
            self.seed = s;
        }
        if let Some(d) = &overrides.device {
            self.device = d.clone();
        }
        if let Some(e) = overrides.epochs {
            self.train.epochs = e;
        }
        if let Some(o) = &overrides.out {
            self.out = o.clone();
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.device != "cpu" {
            return Err(Error::config("device", format!("only `cpu` is available, got `{}`", self.device)));
        }
        if self.train.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if !(self.train.lr > 0.0 && self.train.lr.is_finite()) {
            return Err(Error::config("train.lr", "must be positive"));
        }
        let [b1, b2] = self.train.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(Error::config("train.betas", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.data.val_fraction) {
            return Err(Error::config("data.val_fraction", "must lie in [0, 1)"));
        }
        if self.bench.fps.batch == 0 {
            return Err(Error::config("bench.fps.batch", "must be at least 1"));
        }
        self.data.dataset_spec(Split::Train, self.seed).validate()?;
        if let Some(p) = &self.perturbation {
            p.validate()?;
        }
        let registry = Registry::with_defaults();
        self.model.resolve(&registry, &self.data, self.train.drop_path)?;
        for m in self.bench.suite.iter().flatten() {
            m.resolve(&registry, &self.data, self.train.drop_path)?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical (key-sorted) JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_vec(&value).expect("value serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    /// `out/<first 16 hex digits of the hash>`.
    pub fn run_dir(&self) -> PathBuf {
        self.out.join(&self.hash()[..16])
    }

    /// Bench entries: the configured suite, or the top-level model alone.
    pub fn suite(&self) -> Vec<ModelEntry> {
        self.bench.suite.clone().unwrap_or_else(|| vec![self.model.clone()])
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        self.model.resolve(&Registry::with_defaults(), &self.data, self.train.drop_path)
    }

    /// Perturbation with its seed filled from the experiment seed when left at zero.
    pub fn perturbation_for(&self, kind: PerturbationKind) -> PerturbationSpec {
        match self.perturbation {
            Some(p) if p.kind == kind => p,
            _ => PerturbationSpec::new(kind, self.seed),
        }
    }
}

/// JSON schema of [`ExperimentConfig`].
pub fn schema_json() -> String {
    serde_json::to_string_pretty(&schemars::schema_for!(ExperimentConfig)).expect("schema serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMOKE: &str = "model: {name: metavp-gated_attention, hid_S: 16, hid_T: 64, N_S: 2, N_T: 2}\n";

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_yaml(SMOKE).unwrap();
        assert_eq!(c.train.batch_size, 16);
        assert_eq!(c.data.frame_spec(), FrameSpec::mmnist());
        let m = c.model_config().unwrap();
        assert_eq!((m.hid_s, m.hid_t, m.n_s, m.n_t), (16, 64, 2, 2));
    }

    #[test]
    fn unknown_keys_name_the_key() {
        let err = ExperimentConfig::from_yaml("model: {name: convlstm}\nbogus: 1\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "bogus"), "{err}");
    }

    #[test]
    fn hash_tracks_every_field() {
        let a = ExperimentConfig::from_yaml(SMOKE).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.train.lr = 5e-4;
        assert_ne!(a.hash(), b.hash());
        let mut c = a.clone();
        c.data.num_objects = 3;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn overrides_and_env() {
        let c = ExperimentConfig::from_yaml(SMOKE).unwrap();
        let o = Overrides { seed: Some(7), epochs: Some(0), ..Default::default() };
        let r = c.clone().resolve(&o, |_| None).unwrap();
        assert_eq!((r.seed, r.train.epochs), (7, 0));
        let bad = c.resolve(&Overrides::default(), |k| (k == ENV_DEVICE).then(|| "cuda".to_string()));
        assert!(matches!(bad, Err(Error::Config { ref key, .. }) if key == "device"));
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(LR_GRID.len() * DROP_PATH_GRID.len(), 15);
    }
}
