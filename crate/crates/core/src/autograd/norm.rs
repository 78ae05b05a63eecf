//! Normalization layers with fused forward and backward kernels.

use super::{Graph, OpKind, Var};
use crate::tensor::{Float, Tensor};

/// Layout of a normalization: the input is viewed as `(outer, reduce, inner)`
/// and statistics are taken over `reduce` for every `(outer, inner)` pair.
#[derive(Clone, Copy)]
struct Layout {
    outer: usize,
    reduce: usize,
    inner: usize,
    /// Elements per affine channel along `reduce` (GroupNorm spans H·W per channel).
    per_channel: usize,
    /// Channels covered by one `outer` slice (GroupNorm groups are offsets into C).
    channels_per_outer: usize,
    channels: usize,
}

impl Layout {
    #[inline]
    fn channel(&self, o: usize, r: usize) -> usize {
        (o * self.channels_per_outer + r / self.per_channel) % self.channels
    }

    #[inline]
    fn index(&self, o: usize, r: usize, i: usize) -> usize {
        (o * self.reduce + r) * self.inner + i
    }
}

struct Normalized<T> {
    out: Vec<T>,
    xhat: Vec<T>,
    rstd: Vec<T>,
}

fn forward<T: Float>(l: &Layout, x: &[T], w: &[T], b: &[T], eps: f64) -> Normalized<T> {
    let mut out = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); l.outer * l.inner];
    let inv_n = 1.0 / l.reduce as f64;
    for o in 0..l.outer {
        for i in 0..l.inner {
            let mut mean = 0.0;
            for r in 0..l.reduce {
                mean += x[l.index(o, r, i)].as_f64();
            }
            mean *= inv_n;
            let mut var = 0.0;
            for r in 0..l.reduce {
                let d = x[l.index(o, r, i)].as_f64() - mean;
                var += d * d;
            }
            let rs = 1.0 / (var * inv_n + eps).sqrt();
            rstd[o * l.inner + i] = T::of(rs);
            for r in 0..l.reduce {
                let idx = l.index(o, r, i);
                let c = l.channel(o, r);
                let h = T::of((x[idx].as_f64() - mean) * rs);
                xhat[idx] = h;
                out[idx] = h * w[c] + b[c];
            }
        }
    }
    Normalized { out, xhat, rstd }
}

fn backward<T: Float>(
    l: &Layout,
    xhat: &[T],
    rstd: &[T],
    w: &[T],
    gout: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut dx = vec![T::zero(); gout.len()];
    let mut dw = vec![T::zero(); l.channels];
    let mut db = vec![T::zero(); l.channels];
    let inv_n = T::of(1.0 / l.reduce as f64);
    for o in 0..l.outer {
        for i in 0..l.inner {
            let mut mean_d = T::zero();
            let mut mean_dh = T::zero();
            for r in 0..l.reduce {
                let idx = l.index(o, r, i);
                let c = l.channel(o, r);
                let g = gout[idx];
                dw[c] += g * xhat[idx];
                db[c] += g;
                let d = g * w[c];
                mean_d += d;
                mean_dh += d * xhat[idx];
            }
            mean_d *= inv_n;
            mean_dh *= inv_n;
            let rs = rstd[o * l.inner + i];
            for r in 0..l.reduce {
                let idx = l.index(o, r, i);
                let d = gout[idx] * w[l.channel(o, r)];
                dx[idx] = rs * (d - mean_d - xhat[idx] * mean_dh);
            }
        }
    }
    (dx, dw, db)
}

impl<T: Float> Graph<T> {
    fn normalize(&self, x: &Var<T>, w: &Var<T>, b: &Var<T>, l: Layout, eps: f64) -> Var<T> {
        assert_eq!(w.shape(), &[l.channels], "norm weight shape");
        assert_eq!(b.shape(), &[l.channels], "norm bias shape");
        self.account(OpKind::Norm, x.value.numel() as u64);
        if self.symbolic {
            return self.meta(x.shape().to_vec());
        }
        let n = forward(&l, x.value.data(), w.value.data(), b.value.data(), eps);
        let wv = w.value.clone();
        let shape = x.shape().to_vec();
        let (xhat, rstd) = (n.xhat, n.rstd);
        self.push(Tensor::new(shape.clone(), n.out), &[x, w, b], move |g, needs| {
            let (dx, dw, db) = backward(&l, &xhat, &rstd, wv.data(), g.data());
            let c = l.channels;
            vec![
                needs[0].then(|| Tensor::new(shape, dx)),
                needs[1].then(|| Tensor::new(vec![c], dw)),
                needs[2].then(|| Tensor::new(vec![c], db)),
            ]
        })
    }

    /// LayerNorm across the channel axis of an NCHW tensor, independently per pixel.
    pub fn channel_layer_norm(&self, x: &Var<T>, w: &Var<T>, b: &Var<T>, eps: f64) -> Var<T> {
        let s = x.shape();
        assert_eq!(s.len(), 4, "channel_layer_norm expects NCHW");
        let l = Layout {
            outer: s[0],
            reduce: s[1],
            inner: s[2] * s[3],
            per_channel: 1,
            channels_per_outer: 0,
            channels: s[1],
        };
        self.normalize(x, w, b, l, eps)
    }

    /// GroupNorm over `(C / groups, H, W)` with a per-channel affine transform.
    pub fn group_norm(&self, x: &Var<T>, groups: usize, w: &Var<T>, b: &Var<T>, eps: f64) -> Var<T> {
        let s = x.shape();
        assert_eq!(s.len(), 4, "group_norm expects NCHW");
        assert_eq!(s[1] % groups, 0, "channels {} not divisible into {groups} groups", s[1]);
        let cg = s[1] / groups;
        let hw = s[2] * s[3];
        let l = Layout {
            outer: s[0] * groups,
            reduce: cg * hw,
            inner: 1,
            per_channel: hw,
            channels_per_outer: cg,
            channels: s[1],
        };
        self.normalize(x, w, b, l, eps)
    }
}
