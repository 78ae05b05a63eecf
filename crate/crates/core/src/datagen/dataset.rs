//! Index-addressable Moving MNIST style datasets.

use std::path::PathBuf;
use std::sync::Arc;

use rand::Rng as _;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{derive_rng, streams, SeedSpec};
use crate::tensor::Tensor;
use crate::types::{FrameSpec, Role, SequencePair, VideoBatch};

use super::perturb::{perturb, PerturbationSpec};
use super::render::render_sequence;
use super::sprites::{self, GlyphFamily, Image, Procedural, Sprite};
use super::trajectory::{sample_trajectory, TrajectorySpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Mnist,
    FashionMnist,
    MnistCifar,
}

impl Variant {
    pub fn channels(self) -> usize {
        if self == Variant::MnistCifar {
            3
        } else {
            1
        }
    }

    fn family(self) -> GlyphFamily {
        if self == Variant::FashionMnist {
            GlyphFamily::Fashion
        } else {
            GlyphFamily::Digits
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn stream_base(self) -> u64 {
        match self {
            Split::Train => streams::TRAIN_SPLIT,
            Split::Test => streams::TEST_SPLIT,
        }
    }

    fn index(self) -> u64 {
        self as u64
    }
}

/// Where sprites and backgrounds come from.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpriteSource {
    /// Built-in deterministic glyphs and colour fields.
    Procedural,
    /// IDX and CIFAR-10 binary files below `root`.
    Files { root: PathBuf },
}

fn default_count() -> usize {
    10_000
}
fn default_len() -> usize {
    10
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

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub variant: Variant,
    pub split: Split,
    #[serde(default = "default_count")]
    pub count: usize,
    pub frame_spec: FrameSpec,
    #[serde(rename = "T", default = "default_len")]
    pub t: usize,
    #[serde(rename = "T_prime", default = "default_len")]
    pub t_prime: usize,
    #[serde(default = "default_objects")]
    pub num_objects: usize,
    /// Speed interval in pixels per frame.
    #[serde(default = "default_speed")]
    pub speed_range: [f64; 2],
    pub seed: SeedSpec,
    #[serde(default = "default_source")]
    pub source: SpriteSource,
}

impl DatasetSpec {
    /// Defaults of the Moving MNIST family: 10,000 clips of 10 + 10 frames at 64×64
    /// with two objects.
    pub fn new(variant: Variant, split: Split, master_seed: u64) -> Self {
        Self {
            variant,
            split,
            count: default_count(),
            frame_spec: FrameSpec::new(variant.channels(), 64, 64),
            t: default_len(),
            t_prime: default_len(),
            num_objects: default_objects(),
            speed_range: default_speed(),
            seed: SeedSpec::new(master_seed, 0),
            source: SpriteSource::Procedural,
        }
    }

    pub fn mmnist(split: Split, count: usize, master_seed: u64) -> Self {
        Self { count, ..Self::new(Variant::Mnist, split, master_seed) }
    }

    pub fn frames(&self) -> usize {
        self.t + self.t_prime
    }

    pub fn validate(&self) -> Result<()> {
        self.frame_spec.validate()?;
        if self.frame_spec.channels != self.variant.channels() {
            return Err(Error::config(
                "frame_spec.channels",
                format!("{:?} frames have {} channel(s)", self.variant, self.variant.channels()),
            ));
        }
        if self.t == 0 || self.t_prime == 0 {
            return Err(Error::config("T", "context and horizon lengths must be at least 1"));
        }
        let [lo, hi] = self.speed_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return Err(Error::config("speed_range", format!("invalid interval [{lo}, {hi}]")));
        }
        let g = super::sprites::GLYPH;
        if self.frame_spec.height < g || self.frame_spec.width < g {
            return Err(Error::Geometry(format!(
                "sprite {g}×{g} does not fit canvas {}×{}",
                self.frame_spec.height, self.frame_spec.width
            )));
        }
        Ok(())
    }

    /// Stream of sequence `index`.
    pub fn sequence_seed(&self, index: usize) -> SeedSpec {
        SeedSpec::new(self.seed.master_seed, self.split.stream_base() + self.seed.stream_id + index as u64)
    }
}

/// Everything needed to re-render a clip.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub trajectories: Vec<TrajectorySpec>,
    pub sprites: Vec<Sprite>,
    pub background: Option<Image>,
    pub background_id: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub pair: SequencePair,
    pub provenance: Provenance,
}

enum Pool {
    Procedural(Procedural),
    Files { sprites: Arc<Vec<Sprite>>, backgrounds: Option<Arc<Vec<Image>>> },
}

/// Deterministic dataset: clip `i` is a pure function of the spec and `i`.
pub struct Dataset {
    spec: DatasetSpec,
    pool: Pool,
}

const PROCEDURAL_POOL: [usize; 2] = [60_000, 10_000];
const PROCEDURAL_BACKGROUNDS: [usize; 2] = [50_000, 10_000];

impl Dataset {
    pub fn build(spec: DatasetSpec) -> Result<Self> {
        spec.validate()?;
        let test = spec.split == Split::Test;
        let pool = match &spec.source {
            SpriteSource::Procedural => {
                Pool::Procedural(Procedural { family: spec.variant.family(), master_seed: spec.seed.master_seed })
            }
            SpriteSource::Files { root } => {
                let sprites = sprites::read_idx_images(&sprites::idx_path(root, spec.variant.family(), test))?;
                if sprites.is_empty() {
                    return Err(Error::config("source.root", "sprite file holds no images"));
                }
                let backgrounds = if spec.variant == Variant::MnistCifar {
                    let mut all = Vec::new();
                    for p in sprites::cifar_paths(root, test) {
                        all.extend(sprites::read_cifar_batch(&p)?);
                    }
                    Some(Arc::new(all))
                } else {
                    None
                };
                Pool::Files { sprites: Arc::new(sprites), backgrounds }
            }
        };
        Ok(Self { spec, pool })
    }

    pub fn spec(&self) -> &DatasetSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.spec.count
    }

    pub fn is_empty(&self) -> bool {
        self.spec.count == 0
    }

    fn pool_sizes(&self) -> (usize, usize) {
        let s = self.spec.split.index() as usize;
        match &self.pool {
            Pool::Procedural(_) => (PROCEDURAL_POOL[s], PROCEDURAL_BACKGROUNDS[s]),
            Pool::Files { sprites, backgrounds } => (sprites.len(), backgrounds.as_ref().map_or(0, |b| b.len())),
        }
    }

    fn sprite(&self, id: usize) -> Sprite {
        match &self.pool {
            Pool::Procedural(p) => p.sprite(self.spec.split.index(), id),
            Pool::Files { sprites, .. } => sprites[id].clone(),
        }
    }

    fn background(&self, id: usize) -> Image {
        let fs = self.spec.frame_spec;
        let img = match &self.pool {
            Pool::Procedural(p) => p.background(self.spec.split.index(), id),
            Pool::Files { backgrounds, .. } => backgrounds.as_ref().expect("variant has backgrounds")[id].clone(),
        };
        img.resize(fs.height, fs.width)
    }

    /// Draws sprites, trajectories and background of clip `index`.
    pub fn provenance(&self, index: usize) -> Result<Provenance> {
        let spec = &self.spec;
        let mut rng = derive_rng(spec.sequence_seed(index));
        let (n_sprites, n_backgrounds) = self.pool_sizes();
        let canvas = (spec.frame_spec.height, spec.frame_spec.width);
        let mut trajectories = Vec::with_capacity(spec.num_objects);
        let mut chosen = Vec::with_capacity(spec.num_objects);
        for _ in 0..spec.num_objects {
            let id = rng.gen_range(0..n_sprites);
            let sprite = self.sprite(id);
            let range = (spec.speed_range[0], spec.speed_range[1]);
            trajectories.push(sample_trajectory(&mut rng, id, spec.frames(), canvas, (sprite.height, sprite.width), range)?);
            chosen.push(sprite);
        }
        let background_id = (spec.variant == Variant::MnistCifar).then(|| rng.gen_range(0..n_backgrounds));
        Ok(Provenance {
            trajectories,
            sprites: chosen,
            background: background_id.map(|id| self.background(id)),
            background_id,
        })
    }

    /// Renders a clip from its provenance and splits it into context and target.
    pub fn render(&self, provenance: &Provenance) -> Result<SequencePair> {
        let clip = render_sequence(
            &provenance.sprites,
            &provenance.trajectories,
            provenance.background.as_ref(),
            self.spec.frame_spec,
            self.spec.frames(),
        )?;
        split_clip(&clip, self.spec.t)
    }

    pub fn get(&self, index: usize) -> Result<Sample> {
        if index >= self.len() {
            return Err(Error::contract(format!("index {index} out of range for {} clips", self.len())));
        }
        let provenance = self.provenance(index)?;
        Ok(Sample { pair: self.render(&provenance)?, provenance })
    }

    /// Stacks the clips at `indices` into one batch.
    pub fn batch(&self, indices: &[usize]) -> Result<SequencePair> {
        let pairs = indices.iter().map(|&i| self.get(i).map(|s| s.pair)).collect::<Result<Vec<_>>>()?;
        stack_pairs(&pairs, self.spec.frame_spec)
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<Sample>> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// Renders every clip into 8-bit arrays.
    pub fn materialize(&self) -> Result<Materialized> {
        self.materialize_with(None)
    }

    /// As [`Dataset::materialize`], perturbing every clip first.
    pub fn materialize_with(&self, perturbation: Option<&PerturbationSpec>) -> Result<Materialized> {
        let fs = self.spec.frame_spec;
        let mut context = Vec::with_capacity(self.len() * self.spec.t * fs.pixels());
        let mut target = Vec::with_capacity(self.len() * self.spec.t_prime * fs.pixels());
        for (i, sample) in self.iter().enumerate() {
            let sample = sample?;
            let pair = match perturbation {
                Some(p) => perturb(&sample.pair, Some(&sample.provenance), p, i)?,
                None => sample.pair,
            };
            context.extend(to_u8(pair.context.data().data()));
            target.extend(to_u8(pair.target.data().data()));
        }
        Ok(Materialized { spec: self.spec.clone(), context, target })
    }
}

fn to_u8(v: &[f32]) -> impl Iterator<Item = u8> + '_ {
    v.iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
}

/// Splits a `(B, T + T', …)` clip at frame `t`.
pub fn split_clip(clip: &VideoBatch, t: usize) -> Result<SequencePair> {
    let s = clip.shape();
    let (b, n) = (s[0], s[1]);
    let frame = clip.spec().pixels();
    let mut ctx = Vec::with_capacity(b * t * frame);
    let mut tgt = Vec::with_capacity(b * (n - t) * frame);
    for bi in 0..b {
        let base = bi * n * frame;
        ctx.extend_from_slice(&clip.data().data()[base..base + t * frame]);
        tgt.extend_from_slice(&clip.data().data()[base + t * frame..base + n * frame]);
    }
    let shape = |len| vec![b, len, s[2], s[3], s[4]];
    SequencePair::new(
        VideoBatch::new(Tensor::new(shape(t), ctx), clip.spec(), Role::Context)?,
        VideoBatch::new(Tensor::new(shape(n - t), tgt), clip.spec(), Role::Target)?,
    )
}

fn stack_pairs(pairs: &[SequencePair], spec: FrameSpec) -> Result<SequencePair> {
    if pairs.is_empty() {
        return Err(Error::contract("cannot stack an empty batch"));
    }
    let ctx: Vec<&VideoBatch> = pairs.iter().map(|p| &p.context).collect();
    let tgt: Vec<&VideoBatch> = pairs.iter().map(|p| &p.target).collect();
    let pair = SequencePair::new(VideoBatch::concat(&ctx)?, VideoBatch::concat(&tgt)?)?;
    debug_assert_eq!(pair.spec(), spec);
    Ok(pair)
}

/// A split held as 8-bit arrays `(N, T, C, H, W)` and `(N, T', C, H, W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Materialized {
    pub spec: DatasetSpec,
    pub context: Vec<u8>,
    pub target: Vec<u8>,
}

impl Materialized {
    pub fn len(&self) -> usize {
        self.spec.count
    }

    pub fn is_empty(&self) -> bool {
        self.spec.count == 0
    }

    /// SHA-256 over the context bytes followed by the target bytes, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(&self.context);
        h.update(&self.target);
        hex::encode(h.finalize())
    }

    fn slice(&self, indices: &[usize], bytes: &[u8], len: usize, role: Role) -> Result<VideoBatch> {
        let fs = self.spec.frame_spec;
        let per = len * fs.pixels();
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::contract(format!("index {i} out of range for {} clips", self.len())));
            }
            data.extend(bytes[i * per..(i + 1) * per].iter().map(|&v| v as f32 / 255.0));
        }
        VideoBatch::new(Tensor::new(vec![indices.len(), len, fs.channels, fs.height, fs.width], data), fs, role)
    }

    pub fn batch(&self, indices: &[usize]) -> Result<SequencePair> {
        SequencePair::new(
            self.slice(indices, &self.context, self.spec.t, Role::Context)?,
            self.slice(indices, &self.target, self.spec.t_prime, Role::Target)?,
        )
    }
}
