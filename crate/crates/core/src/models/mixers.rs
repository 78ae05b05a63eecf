//! Token mixers and the MetaFormer block used by the temporal translator.

use crate::autograd::{ConvParams, Graph, Var};
use crate::nn::{Builder, Conv2d, ConvSpec, Init, Linear, Norm, NormKind, ParamStore};
use crate::tensor::Float;

use super::MixerKind;

const PROJ_INIT: Init = Init::TruncNormal(0.02);

fn pointwise(cin: usize, cout: usize) -> ConvSpec {
    ConvSpec::new(cin, cout, 1).init(PROJ_INIT, Init::Zeros)
}

fn zero_pointwise(cin: usize, cout: usize) -> ConvSpec {
    ConvSpec::new(cin, cout, 1).init(Init::Zeros, Init::Zeros)
}

fn depthwise(dim: usize, kernel: usize, dilation: usize) -> ConvSpec {
    let params = ConvParams::default().groups(dim).dilation(dilation).padding(dilation * (kernel / 2));
    ConvSpec::new(dim, dim, kernel).params(params).init(PROJ_INIT, Init::Zeros)
}

/// Spatial token mixer acting on `(N, dim, H, W)`.
#[derive(Clone, Debug)]
pub enum Mixer {
    /// Multi-head self-attention over the `H·W` tokens.
    Attention { qkv: Conv2d, proj: Conv2d, heads: usize },
    /// MLP across the token axis.
    MlpMixer { fc1: Linear, fc2: Linear, tokens: usize },
    /// Depthwise 7×7 convolution.
    ConvNext { dw: Conv2d },
    /// Static depthwise/dilated attention map times a dynamic channel gate.
    GatedAttention {
        proj_1: Conv2d,
        conv0: Conv2d,
        conv_spatial: Conv2d,
        conv1: Conv2d,
        fc1: Linear,
        fc2: Linear,
        proj_2: Conv2d,
    },
}

impl Mixer {
    /// `tokens` is the number of spatial positions (`H·W`) the mixer will see.
    pub fn new<T: Float>(b: &mut Builder<'_, T>, kind: MixerKind, dim: usize, tokens: usize, heads: usize) -> Self {
        match kind {
            MixerKind::Attention => Mixer::Attention {
                qkv: Conv2d::new(b, "qkv", pointwise(dim, 3 * dim)),
                proj: Conv2d::new(b, "proj", zero_pointwise(dim, dim)),
                heads,
            },
            MixerKind::MlpMixer => {
                let hidden = (tokens / 2).max(1);
                Mixer::MlpMixer {
                    fc1: Linear::new(b, "token_fc1", tokens, hidden, true, PROJ_INIT),
                    fc2: Linear::new(b, "token_fc2", hidden, tokens, true, Init::Zeros),
                    tokens,
                }
            }
            MixerKind::ConvNext => Mixer::ConvNext {
                dw: Conv2d::new(b, "dwconv", depthwise(dim, 7, 1).init(Init::Zeros, Init::Zeros)),
            },
            MixerKind::GatedAttention => {
                let reduced = (dim / 16).max(4);
                Mixer::GatedAttention {
                    proj_1: Conv2d::new(b, "proj_1", pointwise(dim, dim)),
                    conv0: Conv2d::new(b, "conv0", depthwise(dim, 5, 1)),
                    conv_spatial: Conv2d::new(b, "conv_spatial", depthwise(dim, 5, 3)),
                    conv1: Conv2d::new(b, "conv1", pointwise(dim, dim)),
                    fc1: Linear::new(b, "gate_fc1", dim, reduced, false, PROJ_INIT),
                    fc2: Linear::new(b, "gate_fc2", reduced, dim, false, PROJ_INIT),
                    proj_2: Conv2d::new(b, "proj_2", zero_pointwise(dim, dim)),
                }
            }
        }
    }

    pub fn forward<T: Float>(&self, g: &Graph<T>, store: &ParamStore<T>, x: &Var<T>) -> Var<T> {
        let s = x.shape().to_vec();
        let (n, d, h, w) = (s[0], s[1], s[2], s[3]);
        let tokens = h * w;
        match self {
            Mixer::Attention { qkv, proj, heads } => {
                let dh = d / heads;
                let qkv = qkv.forward(g, store, x);
                let qkv = g.reshape(&qkv, &[n, 3, heads * dh * tokens]);
                let part = |i: usize| {
                    let p = g.narrow(&qkv, 1, i, 1);
                    g.reshape(&p, &[n * heads, dh, tokens])
                };
                let (q, k, v) = (part(0), part(1), part(2));
                // scores[i, j] = q_i · k_j over the head dimension
                let scores = g.bmm(&q, &k, true, false);
                let scores = g.scale(&scores, 1.0 / (dh as f64).sqrt());
                let attn = g.softmax_last(&scores);
                let out = g.bmm(&v, &attn, false, true);
                let out = g.reshape(&out, &[n, d, h, w]);
                proj.forward(g, store, &out)
            }
            Mixer::MlpMixer { fc1, fc2, tokens: expected } => {
                assert_eq!(tokens, *expected, "mlp_mixer built for {expected} tokens, got {tokens}");
                let t = g.reshape(x, &[n, d, tokens]);
                let t = fc1.forward(g, store, &t);
                let t = g.gelu(&t);
                let t = fc2.forward(g, store, &t);
                g.reshape(&t, &[n, d, h, w])
            }
            Mixer::ConvNext { dw } => dw.forward(g, store, x),
            Mixer::GatedAttention { proj_1, conv0, conv_spatial, conv1, fc1, fc2, proj_2 } => {
                let u = proj_1.forward(g, store, x);
                let u = g.gelu(&u);
                let attn = conv0.forward(g, store, &u);
                let attn = conv_spatial.forward(g, store, &attn);
                let attn = conv1.forward(g, store, &attn);
                let pooled = g.spatial_mean(&u);
                let pooled = g.reshape(&pooled, &[n, d]);
                let gate = fc1.forward(g, store, &pooled);
                let gate = g.relu(&gate);
                let gate = fc2.forward(g, store, &gate);
                let gate = g.sigmoid(&gate);
                let gate = g.reshape(&gate, &[n, d, 1, 1]);
                let y = g.mul(&g.mul(&attn, &gate), &u);
                proj_2.forward(g, store, &y)
            }
        }
    }
}

/// Pre-norm residual block: `x + mixer(norm(x))`, then `x + mlp(norm(x))`,
/// each residual branch under stochastic depth.
#[derive(Clone, Debug)]
pub struct MetaBlock {
    pub norm1: Norm,
    pub mixer: Mixer,
    pub norm2: Norm,
    pub fc1: Conv2d,
    pub fc2: Conv2d,
    pub drop_path: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct MetaBlockSpec {
    pub kind: MixerKind,
    pub dim: usize,
    pub tokens: usize,
    pub heads: usize,
    pub mlp_ratio: f64,
    pub drop_path: f64,
}

impl MetaBlock {
    pub fn new<T: Float>(b: &mut Builder<'_, T>, spec: MetaBlockSpec) -> Self {
        let hidden = ((spec.dim as f64) * spec.mlp_ratio).round().max(1.0) as usize;
        Self {
            norm1: Norm::new(b, "norm1", spec.dim, NormKind::ChannelLayer),
            mixer: b.scope("mixer", |b| Mixer::new(b, spec.kind, spec.dim, spec.tokens, spec.heads)),
            norm2: Norm::new(b, "norm2", spec.dim, NormKind::ChannelLayer),
            fc1: Conv2d::new(b, "mlp_fc1", pointwise(spec.dim, hidden)),
            fc2: Conv2d::new(b, "mlp_fc2", zero_pointwise(hidden, spec.dim)),
            drop_path: spec.drop_path,
        }
    }

    pub fn forward<T: Float>(&self, g: &Graph<T>, store: &ParamStore<T>, x: &Var<T>) -> Var<T> {
        let y = self.norm1.forward(g, store, x);
        let y = self.mixer.forward(g, store, &y);
        let x = g.add(x, &g.drop_path(&y, self.drop_path));
        let y = self.norm2.forward(g, store, &x);
        let y = self.fc1.forward(g, store, &y);
        let y = g.gelu(&y);
        let y = self.fc2.forward(g, store, &y);
        g.add(&x, &g.drop_path(&y, self.drop_path))
    }
}
