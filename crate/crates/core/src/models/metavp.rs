//! Recurrent-free predictor: per-frame conv encoder, MetaFormer translator over
//! time-folded channels, conv decoder.

use crate::autograd::{ConvParams, Graph, Var};
use crate::error::Result;
use crate::nn::{Builder, Conv2d, ConvSpec, Init, Norm, NormKind, ParamStore};
use crate::tensor::Float;

use super::mixers::{MetaBlock, MetaBlockSpec};
use super::ModelConfig;

pub const ATTENTION_HEADS: usize = 8;
const CONV_INIT: Init = Init::TruncNormal(0.02);

/// Conv → GroupNorm(2) → SiLU, optionally strided or followed by a 2× pixel shuffle.
#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub conv: Conv2d,
    pub norm: Norm,
    pub upsample: bool,
}

impl ConvBlock {
    fn new<T: Float>(b: &mut Builder<'_, T>, cin: usize, cout: usize, downsample: bool, upsample: bool) -> Self {
        let stride = if downsample { 2 } else { 1 };
        let width = if upsample { cout * 4 } else { cout };
        let params = ConvParams::default().stride(stride).padding(1);
        Self {
            conv: Conv2d::new(b, "conv", ConvSpec::new(cin, width, 3).params(params).init(CONV_INIT, Init::Zeros)),
            norm: Norm::new(b, "norm", cout, NormKind::Group(2)),
            upsample,
        }
    }

    fn forward<T: Float>(&self, g: &Graph<T>, store: &ParamStore<T>, x: &Var<T>) -> Var<T> {
        let mut y = self.conv.forward(g, store, x);
        if self.upsample {
            y = g.pixel_shuffle(&y, 2);
        }
        let y = self.norm.forward(g, store, &y);
        g.silu(&y)
    }
}

/// Encoder output: the latent clip and the full-resolution stem features.
pub struct Latent<T: Float> {
    /// `(B, T, hid_S, H_l, W_l)`.
    pub data: Var<T>,
    /// `(B·T, hid_S, H, W)`.
    pub skip: Var<T>,
}

#[derive(Clone, Debug)]
pub struct MetaVp {
    pub encoder: Vec<ConvBlock>,
    pub proj_in: Conv2d,
    pub blocks: Vec<MetaBlock>,
    pub proj_out: Conv2d,
    pub decoder: Vec<ConvBlock>,
    pub readout: Conv2d,
    /// Maps `T·C` to `T'·C` output channels when the horizon differs from the context length.
    pub time_proj: Option<Conv2d>,
    t: usize,
    t_prime: usize,
    channels: usize,
    hid_s: usize,
}

impl MetaVp {
    pub fn new<T: Float>(cfg: &ModelConfig, b: &mut Builder<'_, T>) -> Result<Self> {
        cfg.validate()?;
        let mixer = cfg.mixer.expect("validated");
        let (c, hid_s, n_s) = (cfg.frame_spec.channels, cfg.hid_s, cfg.n_s);
        let encoder = b.scope("encoder", |b| {
            (0..n_s)
                .map(|i| b.scope(i.to_string(), |b| ConvBlock::new(b, if i == 0 { c } else { hid_s }, hid_s, i % 2 == 1, false)))
                .collect()
        });
        let f = cfg.downsample();
        let tokens = (cfg.frame_spec.height / f) * (cfg.frame_spec.width / f);
        let folded = cfg.t * hid_s;
        let (proj_in, blocks, proj_out) = b.scope("translator", |b| {
            let proj_in = Conv2d::new(b, "proj_in", ConvSpec::new(folded, cfg.hid_t, 1).init(CONV_INIT, Init::Zeros));
            let spec = MetaBlockSpec {
                kind: mixer,
                dim: cfg.hid_t,
                tokens,
                heads: ATTENTION_HEADS,
                mlp_ratio: cfg.mlp_ratio,
                drop_path: cfg.drop_path,
            };
            let blocks = (0..cfg.n_t).map(|i| b.scope(format!("blocks.{i}"), |b| MetaBlock::new(b, spec))).collect();
            let proj_out = Conv2d::new(b, "proj_out", ConvSpec::new(cfg.hid_t, folded, 1).init(CONV_INIT, Init::Zeros));
            (proj_in, blocks, proj_out)
        });
        let decoder = b.scope("decoder", |b| {
            (0..n_s)
                .map(|j| b.scope(j.to_string(), |b| ConvBlock::new(b, hid_s, hid_s, false, (n_s - 1 - j) % 2 == 1)))
                .collect()
        });
        let readout = Conv2d::new(b, "readout", ConvSpec::new(hid_s, c, 1).init(CONV_INIT, Init::Zeros));
        let time_proj = (cfg.t_prime != cfg.t).then(|| {
            Conv2d::new(b, "time_proj", ConvSpec::new(cfg.t * c, cfg.t_prime * c, 1).init(CONV_INIT, Init::Zeros))
        });
        Ok(Self {
            encoder,
            proj_in,
            blocks,
            proj_out,
            decoder,
            readout,
            time_proj,
            t: cfg.t,
            t_prime: cfg.t_prime,
            channels: c,
            hid_s,
        })
    }

    /// Per-frame spatial encoding of `(B, T, C, H, W)`.
    pub fn encode<T: Float>(&self, g: &Graph<T>, store: &ParamStore<T>, x: &Var<T>) -> Latent<T> {
        let s = x.shape().to_vec();
        assert_eq!(s.len(), 5, "encode expects (B, T, C, H, W), got {s:?}");
        let (b, t) = (s[0], s[1]);
        let frames = g.reshape(x, &[b * t, s[2], s[3], s[4]]);
        let skip = self.encoder[0].forward(g, store, &frames);
        let mut z = skip.clone();
        for block in &self.encoder[1..] {
            z = block.forward(g, store, &z);
        }
        let zs = z.shape().to_vec();
        let data = g.reshape(&z, &[b, t, zs[1], zs[2], zs[3]]);
        Latent { data, skip }
    }

    /// Temporal mixing over the time-folded channel axis. Shape preserving.
    pub fn translate<T: Float>(&self, g: &Graph<T>, store: &ParamStore<T>, latent: &Var<T>) -> Var<T> {
        let s = latent.shape().to_vec();
        let z = g.reshape(latent, &[s[0], s[1] * s[2], s[3], s[4]]);
        let mut z = self.proj_in.forward(g, store, &z);
        for block in &self.blocks {
            z = block.forward(g, store, &z);
        }
        let z = self.proj_out.forward(g, store, &z);
        g.reshape(&z, &s)
    }

    /// Reconstructs `(B, T', C, H, W)` frames from a translated latent.
    pub fn decode<T: Float>(&self, g: &Graph<T>, store: &ParamStore<T>, latent: &Var<T>, skip: &Var<T>) -> Var<T> {
        let s = latent.shape().to_vec();
        let (b, t) = (s[0], s[1]);
        let mut y = g.reshape(latent, &[b * t, s[2], s[3], s[4]]);
        let last = self.decoder.len() - 1;
        for block in &self.decoder[..last] {
            y = block.forward(g, store, &y);
        }
        let y = self.decoder[last].forward(g, store, &g.add(&y, skip));
        let y = self.readout.forward(g, store, &y);
        let (h, w) = (y.shape()[2], y.shape()[3]);
        let c = self.channels;
        let y = g.reshape(&y, &[b, t * c, h, w]);
        let y = match &self.time_proj {
            Some(p) => p.forward(g, store, &y),
            None => y,
        };
        g.reshape(&y, &[b, self.t_prime, c, h, w])
    }

    pub fn forward<T: Float>(&self, g: &Graph<T>, store: &ParamStore<T>, x: &Var<T>) -> Var<T> {
        assert_eq!(x.shape()[1], self.t, "MetaVP built for T = {}, got {:?}", self.t, x.shape());
        let latent = self.encode(g, store, x);
        let z = self.translate(g, store, &latent.data);
        self.decode(g, store, &z, &latent.skip)
    }

    pub fn hid_s(&self) -> usize {
        self.hid_s
    }
}
