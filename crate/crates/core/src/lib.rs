//! Spatio-temporal predictive learning at desk scale.
//!
//! The crate provides a small reverse-mode autograd engine ([`autograd`]), the
//! recurrent-free MetaVP predictor and recurrent ConvLSTM / ST-LSTM baselines
//! ([`models`]), deterministic Moving MNIST style data ([`datagen`]), quality and
//! cost metrics ([`metrics`]) and a training / benchmark harness ([`harness`]).

pub mod autograd;
pub mod datagen;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod types;

pub use error::{Error, Result};
pub use models::{build_model, MixerKind, Model, ModelConfig, ModelKind, Registry};
pub use rng::{derive_rng, SeedSpec};
pub use tensor::Tensor;
pub use types::{FrameSpec, Role, SequencePair, VideoBatch};
