//! Robustness perturbations: missing frames, noisy dynamics and occlusion.

use rand::Rng as _;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_rng, streams, Rng, SeedSpec};
use crate::types::SequencePair;

use super::dataset::{split_clip, Provenance};
use super::render::render_sequence;
use super::trajectory::perturb_dynamics;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    Missing,
    Dynamic,
    Perceptual,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 3] = [PerturbationKind::Missing, PerturbationKind::Dynamic, PerturbationKind::Perceptual];

    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationKind::Missing => "missing",
            PerturbationKind::Dynamic => "dynamic",
            PerturbationKind::Perceptual => "perceptual",
        }
    }
}

fn default_p_missing() -> f64 {
    0.2
}
fn default_sigma_v() -> f64 {
    0.5
}
fn default_patch() -> usize {
    24
}
fn default_seed() -> SeedSpec {
    SeedSpec::new(0, 0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    /// Probability that a context frame is blanked.
    #[serde(default = "default_p_missing")]
    pub p_missing: f64,
    /// Std of the per-step velocity noise, pixels per frame.
    #[serde(default = "default_sigma_v")]
    pub sigma_v: f64,
    /// Side of the black occluding square, pixels.
    #[serde(default = "default_patch")]
    pub patch_size: usize,
    #[serde(default = "default_seed")]
    pub seed: SeedSpec,
}

impl PerturbationSpec {
    pub fn new(kind: PerturbationKind, master_seed: u64) -> Self {
        Self {
            kind,
            p_missing: default_p_missing(),
            sigma_v: default_sigma_v(),
            patch_size: default_patch(),
            seed: SeedSpec::new(master_seed, 0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_missing) {
            return Err(Error::config("perturbation.p_missing", "must lie in [0, 1]"));
        }
        if !(self.sigma_v.is_finite() && self.sigma_v >= 0.0) {
            return Err(Error::config("perturbation.sigma_v", "must be finite and non-negative"));
        }
        if self.patch_size == 0 {
            return Err(Error::config("perturbation.patch_size", "must be at least 1"));
        }
        Ok(())
    }

    /// Random stream of the clip at dataset index `index`.
    pub fn rng(&self, index: usize) -> Rng {
        derive_rng(SeedSpec::new(self.seed.master_seed, streams::PERTURBATION + self.seed.stream_id + index as u64))
    }
}

/// Which of `t` context frames are blanked: one uniform draw per frame, in order.
pub fn missing_mask(rng: &mut Rng, t: usize, p: f64) -> Vec<bool> {
    (0..t).map(|_| rng.gen::<f64>() < p).collect()
}

/// Top-left corners `(x, y)` of one occluding square per context frame.
pub fn patch_positions(rng: &mut Rng, t: usize, canvas: (usize, usize), patch: usize) -> Vec<(usize, usize)> {
    let (h, w) = canvas;
    (0..t).map(|_| (rng.gen_range(0..=w.saturating_sub(patch)), rng.gen_range(0..=h.saturating_sub(patch)))).collect()
}

/// Applies `spec` to a single clip drawn from dataset index `index`. Dynamic
/// noise re-renders the clip and therefore needs its provenance.
pub fn perturb(pair: &SequencePair, provenance: Option<&Provenance>, spec: &PerturbationSpec, index: usize) -> Result<SequencePair> {
    spec.validate()?;
    if pair.context.batch() != 1 {
        return Err(Error::contract(format!("perturb expects one clip, got a batch of {}", pair.context.batch())));
    }
    let mut rng = spec.rng(index);
    let fs = pair.spec();
    let t = pair.context.len();
    match spec.kind {
        PerturbationKind::Missing => {
            let mut out = pair.clone();
            for (f, drop) in missing_mask(&mut rng, t, spec.p_missing).into_iter().enumerate() {
                if drop {
                    out.context.frame_mut(0, f).fill(0.0);
                }
            }
            Ok(out)
        }
        PerturbationKind::Perceptual => {
            let mut out = pair.clone();
            let p = spec.patch_size.min(fs.height).min(fs.width);
            for (f, (x0, y0)) in patch_positions(&mut rng, t, (fs.height, fs.width), p).into_iter().enumerate() {
                let frame = out.context.frame_mut(0, f);
                for c in 0..fs.channels {
                    for y in y0..y0 + p {
                        let row = c * fs.height * fs.width + y * fs.width;
                        frame[row + x0..row + x0 + p].fill(0.0);
                    }
                }
            }
            Ok(out)
        }
        PerturbationKind::Dynamic => {
            let prov = provenance.ok_or_else(|| Error::Provenance("dynamic noise needs the clip's trajectories".into()))?;
            let frames = t + pair.target.len();
            let trajectories = prov
                .trajectories
                .iter()
                .zip(&prov.sprites)
                .map(|(tr, s)| perturb_dynamics(tr, (fs.height, fs.width), (s.height, s.width), spec.sigma_v, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let clip = render_sequence(&prov.sprites, &trajectories, prov.background.as_ref(), fs, frames)?;
            split_clip(&clip, t)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::dataset::{Dataset, DatasetSpec, Split};

    fn sample() -> crate::datagen::Sample {
        Dataset::build(DatasetSpec::mmnist(Split::Test, 2, 11)).unwrap().get(1).unwrap()
    }

    #[test]
    fn degenerate_missing_probabilities() {
        let s = sample();
        let mut spec = PerturbationSpec::new(PerturbationKind::Missing, 3);
        spec.p_missing = 0.0;
        assert_eq!(perturb(&s.pair, None, &spec, 1).unwrap(), s.pair);
        spec.p_missing = 1.0;
        let out = perturb(&s.pair, None, &spec, 1).unwrap();
        assert!(out.context.data().data().iter().all(|&v| v == 0.0));
        assert_eq!(out.target, s.pair.target);
    }

    #[test]
    fn dynamic_needs_provenance() {
        let s = sample();
        let spec = PerturbationSpec::new(PerturbationKind::Dynamic, 3);
        assert!(matches!(perturb(&s.pair, None, &spec, 1), Err(Error::Provenance(_))));
        let out = perturb(&s.pair, Some(&s.provenance), &spec, 1).unwrap();
        assert_ne!(out.target, s.pair.target);
    }

    #[test]
    fn zero_noise_dynamic_is_identity() {
        let s = sample();
        let mut spec = PerturbationSpec::new(PerturbationKind::Dynamic, 3);
        spec.sigma_v = 0.0;
        assert_eq!(perturb(&s.pair, Some(&s.provenance), &spec, 1).unwrap(), s.pair);
    }
}
