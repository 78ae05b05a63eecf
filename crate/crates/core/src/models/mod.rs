//! Model configuration, registry and the common model interface.

pub mod checkpoint;
pub mod metavp;
pub mod mixers;
pub mod recurrent;

use std::fmt;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{Builder, ParamStore};
use crate::rng::{derive_rng, streams, SeedSpec};
use crate::tensor::{Float, Tensor};
use crate::types::{FrameSpec, Role, VideoBatch};

pub use metavp::MetaVp;
pub use recurrent::RecurrentNet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Convlstm,
    StLstm,
    Metavp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum MixerKind {
    Attention,
    MlpMixer,
    ConvNext,
    GatedAttention,
}

impl MixerKind {
    pub const ALL: [MixerKind; 4] =
        [MixerKind::Attention, MixerKind::MlpMixer, MixerKind::ConvNext, MixerKind::GatedAttention];

    pub fn as_str(self) -> &'static str {
        match self {
            MixerKind::Attention => "attention",
            MixerKind::MlpMixer => "mlp_mixer",
            MixerKind::ConvNext => "conv_next",
            MixerKind::GatedAttention => "gated_attention",
        }
    }
}

impl fmt::Display for MixerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_hid_s() -> usize {
    64
}
fn default_hid_t() -> usize {
    512
}
fn default_n_s() -> usize {
    4
}
fn default_n_t() -> usize {
    8
}
fn default_len() -> usize {
    10
}
fn default_frame_spec() -> FrameSpec {
    FrameSpec::mmnist()
}
fn default_mlp_ratio() -> f64 {
    8.0
}
fn default_rnn_layers() -> usize {
    4
}
fn default_rnn_hidden() -> usize {
    128
}
fn default_rnn_kernel() -> usize {
    3
}

/// Architecture hyper-parameters. Defaults are the Moving MNIST column of the
/// reference hyper-parameter table; `rnn_*` fields apply to recurrent kinds only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixer: Option<MixerKind>,
    #[serde(rename = "hid_S", default = "default_hid_s")]
    pub hid_s: usize,
    #[serde(rename = "hid_T", default = "default_hid_t")]
    pub hid_t: usize,
    #[serde(rename = "N_S", default = "default_n_s")]
    pub n_s: usize,
    #[serde(rename = "N_T", default = "default_n_t")]
    pub n_t: usize,
    #[serde(rename = "T", default = "default_len")]
    pub t: usize,
    #[serde(rename = "T_prime", default = "default_len")]
    pub t_prime: usize,
    #[serde(default = "default_frame_spec")]
    pub frame_spec: FrameSpec,
    /// Hidden-width ratio of the channel MLP in each temporal block.
    #[serde(default = "default_mlp_ratio")]
    pub mlp_ratio: f64,
    /// Stochastic-depth probability of every temporal block.
    #[serde(default)]
    pub drop_path: f64,
    #[serde(default = "default_rnn_layers")]
    pub rnn_layers: usize,
    #[serde(default = "default_rnn_hidden")]
    pub rnn_hidden: usize,
    #[serde(default = "default_rnn_kernel")]
    pub rnn_kernel: usize,
}

impl ModelConfig {
    /// Moving MNIST defaults for `kind` (and `mixer` for MetaVP).
    pub fn mmnist(kind: ModelKind, mixer: Option<MixerKind>) -> Self {
        Self {
            kind,
            mixer,
            hid_s: default_hid_s(),
            hid_t: default_hid_t(),
            n_s: default_n_s(),
            n_t: default_n_t(),
            t: 10,
            t_prime: 10,
            frame_spec: FrameSpec::mmnist(),
            mlp_ratio: default_mlp_ratio(),
            drop_path: 0.0,
            rnn_layers: default_rnn_layers(),
            rnn_hidden: default_rnn_hidden(),
            rnn_kernel: default_rnn_kernel(),
        }
    }

    pub fn metavp(mixer: MixerKind) -> Self {
        Self::mmnist(ModelKind::Metavp, Some(mixer))
    }

    /// Total spatial downsampling factor of the MetaVP encoder.
    pub fn downsample(&self) -> usize {
        1 << (self.n_s / 2)
    }

    pub fn validate(&self) -> Result<()> {
        self.frame_spec.validate()?;
        if self.t == 0 {
            return Err(Error::config("T", "context length must be at least 1"));
        }
        if self.t_prime == 0 {
            return Err(Error::config("T_prime", "horizon must be at least 1"));
        }
        match self.kind {
            ModelKind::Metavp => self.validate_metavp(),
            ModelKind::Convlstm | ModelKind::StLstm => self.validate_recurrent(),
        }
    }

    fn validate_metavp(&self) -> Result<()> {
        let mixer = self.mixer.ok_or_else(|| Error::config("mixer", "metavp needs a token mixer"))?;
        if self.n_s == 0 || self.n_s % 2 != 0 {
            return Err(Error::config("N_S", format!("must be a positive even integer, got {}", self.n_s)));
        }
        let f = self.downsample();
        let fs = self.frame_spec;
        if fs.height % f != 0 || fs.width % f != 0 {
            return Err(Error::config(
                "N_S",
                format!("frame {}×{} is not divisible by the encoder stride {f}", fs.height, fs.width),
            ));
        }
        if self.hid_s == 0 || self.hid_s % 2 != 0 {
            return Err(Error::config("hid_S", "must be a positive even integer (two normalization groups)"));
        }
        if self.hid_t == 0 {
            return Err(Error::config("hid_T", "must be positive"));
        }
        if mixer == MixerKind::Attention && self.hid_t % metavp::ATTENTION_HEADS != 0 {
            return Err(Error::config(
                "hid_T",
                format!("attention needs hid_T divisible by {} heads", metavp::ATTENTION_HEADS),
            ));
        }
        if mixer == MixerKind::MlpMixer && (fs.height / f) * (fs.width / f) < 2 {
            return Err(Error::config("N_S", "mlp_mixer needs at least two latent tokens"));
        }
        if !(self.mlp_ratio > 0.0) {
            return Err(Error::config("mlp_ratio", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.drop_path) {
            return Err(Error::config("drop_path", "must lie in [0, 1]"));
        }
        Ok(())
    }

    fn validate_recurrent(&self) -> Result<()> {
        if self.mixer.is_some() {
            return Err(Error::config("mixer", "token mixers apply to metavp only"));
        }
        if self.rnn_layers == 0 || self.rnn_hidden == 0 {
            return Err(Error::config("rnn_layers", "recurrent stacks need at least one layer of width ≥ 1"));
        }
        if self.rnn_kernel % 2 == 0 {
            return Err(Error::config("rnn_kernel", "kernel size must be odd"));
        }
        Ok(())
    }
}

/// Position of a method in the recurrent / recurrent-free taxonomy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    RecurrentBased,
    RecurrentFree,
}

/// One row of the method taxonomy.
#[derive(Clone, Copy, Debug)]
pub struct TaxonomyRow {
    pub method: &'static str,
    pub venue: &'static str,
    pub category: Category,
    pub spatial: &'static str,
    pub temporal: &'static str,
}

const fn row(
    method: &'static str,
    venue: &'static str,
    category: Category,
    spatial: &'static str,
    temporal: &'static str,
) -> TaxonomyRow {
    TaxonomyRow { method, venue, category, spatial, temporal }
}

/// Categorization of the benchmarked methods.
pub const TAXONOMY: &[TaxonomyRow] = &[
    row("ConvLSTM", "NeurIPS 2015", Category::RecurrentBased, "Conv2D", "Conv-LSTM"),
    row("PredNet", "ICLR 2017", Category::RecurrentBased, "Conv2D", "ST-LSTM"),
    row("PredRNN", "NeurIPS 2017", Category::RecurrentBased, "Conv2D", "ST-LSTM"),
    row("PredRNN++", "ICML 2018", Category::RecurrentBased, "Conv2D", "Casual-LSTM"),
    row("MIM", "CVPR 2019", Category::RecurrentBased, "Conv2D", "MIM Block"),
    row("E3D-LSTM", "ICLR 2019", Category::RecurrentBased, "Conv3D", "E3D-LSTM"),
    row("CrevNet", "ICLR 2020", Category::RecurrentBased, "Conv3D", "ST-LSTM"),
    row("PhyDNet", "CVPR 2020", Category::RecurrentBased, "Conv2D", "ConvLSTM+PhyCell"),
    row("MAU", "NeurIPS 2021", Category::RecurrentBased, "Conv2D", "MAU"),
    row("PredRNNv2", "TPAMI 2022", Category::RecurrentBased, "Conv2D", "ST-LSTM"),
    row("DMVFN", "CVPR 2023", Category::RecurrentBased, "Conv2D", "MVFB"),
    row("SimVP", "CVPR 2022", Category::RecurrentFree, "Conv2D", "IncepU"),
    row("TAU", "CVPR 2023", Category::RecurrentFree, "Conv2D", "TAU"),
    row("SimVPv2", "arXiv", Category::RecurrentFree, "Conv2D", "gSTA"),
];

/// Category of a taxonomy method, matched case-insensitively.
pub fn taxonomy_category(name: &str) -> Option<Category> {
    TAXONOMY.iter().find(|r| r.method.eq_ignore_ascii_case(name)).map(|r| r.category)
}

/// Network topology; parameters live separately in a [`ParamStore`].
#[derive(Clone, Debug)]
pub enum Architecture {
    MetaVp(MetaVp),
    Recurrent(RecurrentNet),
}

pub type BuilderFn = fn(&ModelConfig, &mut Builder<'_, f64>) -> Result<Architecture>;

#[derive(Clone)]
pub struct RegistryEntry {
    pub name: String,
    pub category: Category,
    /// Kind (and mixer) a config must have for this entry.
    pub kind: ModelKind,
    pub mixer: Option<MixerKind>,
    pub builder: BuilderFn,
}

impl fmt::Debug for RegistryEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegistryEntry")
            .field("name", &self.name)
            .field("category", &self.category)
            .field("kind", &self.kind)
            .field("mixer", &self.mixer)
            .finish()
    }
}

fn build_metavp(cfg: &ModelConfig, b: &mut Builder<'_, f64>) -> Result<Architecture> {
    Ok(Architecture::MetaVp(MetaVp::new(cfg, b)?))
}

fn build_recurrent(cfg: &ModelConfig, b: &mut Builder<'_, f64>) -> Result<Architecture> {
    Ok(Architecture::Recurrent(RecurrentNet::new(cfg, b)?))
}

/// Name → builder map.
#[derive(Debug, Default, Clone)]
pub struct Registry {
    entries: Vec<RegistryEntry>,
}

impl Registry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// All built-in models.
    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        let builtin = [
            ("convlstm", Category::RecurrentBased, ModelKind::Convlstm, None, build_recurrent as BuilderFn),
            ("predrnn", Category::RecurrentBased, ModelKind::StLstm, None, build_recurrent),
        ];
        for (name, category, kind, mixer, builder) in builtin {
            r.register(RegistryEntry { name: name.into(), category, kind, mixer, builder }).expect("builtin");
        }
        for mixer in MixerKind::ALL {
            r.register(RegistryEntry {
                name: format!("metavp-{mixer}"),
                category: Category::RecurrentFree,
                kind: ModelKind::Metavp,
                mixer: Some(mixer),
                builder: build_metavp,
            })
            .expect("builtin");
        }
        r
    }

    pub fn register(&mut self, entry: RegistryEntry) -> Result<()> {
        if self.get(&entry.name).is_some() {
            return Err(Error::Registry(format!("model `{}` is already registered", entry.name)));
        }
        if let Some(expected) = taxonomy_category(&entry.name) {
            if expected != entry.category {
                return Err(Error::Registry(format!(
                    "`{}` is {expected:?} in the method taxonomy, not {:?}",
                    entry.name, entry.category
                )));
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&RegistryEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    /// Completes `config` with the entry's kind and mixer and checks compatibility.
    pub fn resolve_config(&self, name: &str, config: &ModelConfig) -> Result<ModelConfig> {
        let entry = self.get(name).ok_or_else(|| Error::Registry(format!("unknown model `{name}`")))?;
        if config.kind != entry.kind {
            return Err(Error::config(
                "kind",
                format!("model `{name}` is {:?}, config says {:?}", entry.kind, config.kind),
            ));
        }
        let mut cfg = config.clone();
        match (entry.mixer, config.mixer) {
            (None, Some(m)) => {
                return Err(Error::config("mixer", format!("`{name}` takes no token mixer, got {m}")));
            }
            (Some(want), Some(got)) if want != got => {
                return Err(Error::config("mixer", format!("`{name}` uses {want}, config says {got}")));
            }
            (Some(want), _) => cfg.mixer = Some(want),
            (None, None) => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds and initializes model `name`. Initialization draws from the model-init stream of `seed`.
    pub fn build(&self, name: &str, config: &ModelConfig, seed: u64) -> Result<Model<f32>> {
        Ok(self.build_f64(name, config, seed)?.cast())
    }

    /// As [`Registry::build`], keeping 64-bit parameters (for gradient checks).
    pub fn build_f64(&self, name: &str, config: &ModelConfig, seed: u64) -> Result<Model<f64>> {
        let cfg = self.resolve_config(name, config)?;
        let entry = self.get(name).expect("resolved above");
        let mut store = ParamStore::<f64>::new();
        let mut rng = derive_rng(SeedSpec::new(seed, streams::MODEL_INIT));
        let arch = (entry.builder)(&cfg, &mut Builder::new(&mut store, &mut rng))?;
        Ok(Model { name: name.to_string(), category: entry.category, config: cfg, arch, params: store })
    }
}

/// Convenience wrapper over the default registry.
pub fn build_model(name: &str, config: &ModelConfig, seed: u64) -> Result<Model<f32>> {
    Registry::with_defaults().build(name, config, seed)
}

/// A built model: topology plus parameters.
#[derive(Clone)]
pub struct Model<T: Float> {
    pub name: String,
    pub category: Category,
    pub config: ModelConfig,
    pub arch: Architecture,
    pub params: ParamStore<T>,
}

impl<T: Float> Model<T> {
    /// Maps a context clip `(B, T, C, H, W)` to predictions `(B, T', C, H, W)`.
    pub fn forward(&self, g: &Graph<T>, context: &Var<T>) -> Var<T> {
        match &self.arch {
            Architecture::MetaVp(m) => m.forward(g, &self.params, context),
            Architecture::Recurrent(r) => r.rollout(g, &self.params, context, self.config.t_prime),
        }
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn cast<U: Float>(&self) -> Model<U> {
        Model {
            name: self.name.clone(),
            category: self.category,
            config: self.config.clone(),
            arch: self.arch.clone(),
            params: self.params.cast(),
        }
    }

    pub fn check_context(&self, context: &VideoBatch) -> Result<()> {
        let cfg = &self.config;
        if context.spec() != cfg.frame_spec || context.len() != cfg.t {
            return Err(Error::contract(format!(
                "context shape {:?} does not match model input (B, {}, {}, {}, {})",
                context.shape(),
                cfg.t,
                cfg.frame_spec.channels,
                cfg.frame_spec.height,
                cfg.frame_spec.width
            )));
        }
        Ok(())
    }

    /// Evaluation-mode prediction without gradient tracking.
    pub fn predict(&self, context: &VideoBatch) -> Result<VideoBatch> {
        self.check_context(context)?;
        let g = Graph::<T>::inference();
        let x = Var::constant(context.data().cast::<T>());
        let y = self.forward(&g, &x);
        let out: Tensor<f32> = y.value().cast();
        VideoBatch::new(out, self.config.frame_spec, Role::Prediction)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_registration_fails() {
        let mut r = Registry::with_defaults();
        let entry = r.get("convlstm").unwrap().clone();
        assert!(matches!(r.register(entry), Err(Error::Registry(_))));
    }

    #[test]
    fn taxonomy_category_is_enforced() {
        let mut r = Registry::empty();
        let bad = RegistryEntry {
            name: "convlstm".into(),
            category: Category::RecurrentFree,
            kind: ModelKind::Convlstm,
            mixer: None,
            builder: build_recurrent,
        };
        assert!(r.register(bad).is_err());
    }

    #[test]
    fn unknown_and_incompatible_models() {
        let r = Registry::with_defaults();
        let cfg = ModelConfig::mmnist(ModelKind::Convlstm, Some(MixerKind::Attention));
        assert!(matches!(r.resolve_config("convlstm", &cfg), Err(Error::Config { .. })));
        assert!(matches!(r.resolve_config("unknown", &cfg), Err(Error::Registry(_))));
    }

    #[test]
    fn odd_block_count_is_rejected() {
        let mut cfg = ModelConfig::metavp(MixerKind::ConvNext);
        cfg.n_s = 3;
        assert!(matches!(cfg.validate(), Err(Error::Config { key, .. }) if key == "N_S"));
    }
}
