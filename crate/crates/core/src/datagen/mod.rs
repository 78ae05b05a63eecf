//! Deterministic Moving MNIST style data and robustness perturbations.

pub mod container;
mod dataset;
mod perturb;
mod render;
pub mod sprites;
pub mod trajectory;

pub use dataset::{split_clip, Dataset, DatasetSpec, Materialized, Provenance, Sample, Split, SpriteSource, Variant};
pub use perturb::{missing_mask, patch_positions, perturb, PerturbationKind, PerturbationSpec};
pub use render::{quantize, render_sequence};
pub use sprites::{Image, Sprite};
pub use trajectory::{reflect_step, sample_trajectory, TrajectorySpec};
