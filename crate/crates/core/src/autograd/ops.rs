//! Elementwise, reduction, view and matrix operations.

use std::sync::Arc;

use super::{Graph, OpKind, Var};
use crate::tensor::{gemm, numel, strides_of, Float, Tensor};

pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let rank = a.len().max(b.len());
    (0..rank)
        .map(|i| {
            let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
            let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
            match (da, db) {
                (x, y) if x == y => x,
                (1, y) => y,
                (x, 1) => x,
                _ => panic!("shapes {a:?} and {b:?} do not broadcast"),
            }
        })
        .collect()
}

/// Strides of `shape` viewed as broadcast to `out` (zero along broadcast axes).
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let offset = out.len() - shape.len();
    let own = strides_of(shape);
    (0..out.len())
        .map(|i| {
            if i < offset {
                0
            } else {
                let d = shape[i - offset];
                if d == 1 && out[i] != 1 {
                    0
                } else {
                    own[i - offset]
                }
            }
        })
        .collect()
}

/// Drops unit axes and merges axes that are jointly contiguous for every operand.
fn coalesce<const K: usize>(shape: &[usize], strides: [Vec<usize>; K]) -> (Vec<usize>, [Vec<usize>; K]) {
    let mut out_shape: Vec<usize> = Vec::new();
    let mut out_strides: [Vec<usize>; K] = std::array::from_fn(|_| Vec::new());
    for (i, &d) in shape.iter().enumerate() {
        if d == 1 {
            continue;
        }
        let mergeable = !out_shape.is_empty()
            && (0..K).all(|k| *out_strides[k].last().unwrap() == strides[k][i] * d);
        if mergeable {
            *out_shape.last_mut().unwrap() *= d;
            for k in 0..K {
                *out_strides[k].last_mut().unwrap() = strides[k][i];
            }
        } else {
            out_shape.push(d);
            for k in 0..K {
                out_strides[k].push(strides[k][i]);
            }
        }
    }
    (out_shape, out_strides)
}

/// Visits every index of `shape`, passing the linear offset into each strided operand.
fn walk<const K: usize>(shape: &[usize], strides: [Vec<usize>; K], mut f: impl FnMut([usize; K])) {
    if shape.iter().any(|&d| d == 0) {
        return;
    }
    let (shape, strides) = coalesce(shape, strides);
    let nd = shape.len();
    if nd == 0 {
        f([0; K]);
        return;
    }
    let inner = shape[nd - 1];
    let inner_s: [usize; K] = std::array::from_fn(|k| strides[k][nd - 1]);
    let mut idx = vec![0usize; nd - 1];
    let mut base = [0usize; K];
    loop {
        let mut off = base;
        for _ in 0..inner {
            f(off);
            for k in 0..K {
                off[k] += inner_s[k];
            }
        }
        let mut d = nd - 1;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            for k in 0..K {
                base[k] += strides[k][d];
            }
            if idx[d] < shape[d] {
                break;
            }
            for k in 0..K {
                base[k] -= strides[k][d] * shape[d];
            }
            idx[d] = 0;
        }
    }
}

fn binary_map<T: Float>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::new(a.shape().to_vec(), data);
    }
    let out_shape = broadcast_shape(a.shape(), b.shape());
    let mut out = vec![T::zero(); numel(&out_shape)];
    let (ad, bd) = (a.data(), b.data());
    walk(
        &out_shape,
        [strides_of(&out_shape), broadcast_strides(a.shape(), &out_shape), broadcast_strides(b.shape(), &out_shape)],
        |[o, i, j]| out[o] = f(ad[i], bd[j]),
    );
    Tensor::new(out_shape, out)
}

/// Sums `grad` down to `target` (the inverse of broadcasting).
pub(crate) fn sum_to_shape<T: Float>(grad: &Tensor<T>, target: &[usize]) -> Tensor<T> {
    if grad.shape() == target {
        return grad.clone();
    }
    let mut out = vec![T::zero(); numel(target)];
    let gd = grad.data();
    walk(
        grad.shape(),
        [strides_of(grad.shape()), broadcast_strides(target, grad.shape())],
        |[i, t]| out[t] += gd[i],
    );
    Tensor::new(target.to_vec(), out)
}

/// `sum_to_shape(grad * other)` without materializing the product.
fn mul_sum_to_shape<T: Float>(grad: &Tensor<T>, other: &Tensor<T>, target: &[usize]) -> Tensor<T> {
    let gs = grad.shape();
    if gs == target && other.shape() == gs {
        let data = grad.data().iter().zip(other.data()).map(|(&g, &o)| g * o).collect();
        return Tensor::new(gs.to_vec(), data);
    }
    let mut out = vec![T::zero(); numel(target)];
    let (gd, od) = (grad.data(), other.data());
    walk(
        gs,
        [strides_of(gs), broadcast_strides(other.shape(), gs), broadcast_strides(target, gs)],
        |[i, j, t]| out[t] += gd[i] * od[j],
    );
    Tensor::new(target.to_vec(), out)
}

fn expand_to<T: Float>(src: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    if src.shape() == shape {
        return src.clone();
    }
    let mut out = vec![T::zero(); numel(shape)];
    let sd = src.data();
    walk(shape, [strides_of(shape), broadcast_strides(src.shape(), shape)], |[o, i]| out[o] = sd[i]);
    Tensor::new(shape.to_vec(), out)
}

fn permute_tensor<T: Float>(src: &Tensor<T>, perm: &[usize]) -> Tensor<T> {
    let in_strides = strides_of(src.shape());
    let out_shape: Vec<usize> = perm.iter().map(|&p| src.shape()[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = vec![T::zero(); src.numel()];
    let sd = src.data();
    walk(&out_shape, [strides_of(&out_shape), src_strides], |[o, i]| out[o] = sd[i]);
    Tensor::new(out_shape, out)
}

#[inline]
fn sigmoid<T: Float>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[inline]
fn gelu<T: Float>(x: T) -> T {
    let inner = T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x);
    T::of(0.5) * x * (T::one() + inner.tanh())
}

#[inline]
fn gelu_grad<T: Float>(x: T) -> T {
    let inner = T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x);
    let t = inner.tanh();
    let dinner = T::of(GELU_C) * (T::one() + T::of(3.0 * GELU_A) * x * x);
    T::of(0.5) * (T::one() + t) + T::of(0.5) * x * (T::one() - t * t) * dinner
}

impl<T: Float> Graph<T> {
    fn binary(&self, a: &Var<T>, b: &Var<T>, kind: BinaryKind) -> Var<T> {
        let out_shape = broadcast_shape(a.shape(), b.shape());
        self.account(OpKind::Elementwise, numel(&out_shape) as u64);
        if self.symbolic {
            return self.meta(out_shape);
        }
        let value = match kind {
            BinaryKind::Add => binary_map(a.value(), b.value(), |x, y| x + y),
            BinaryKind::Sub => binary_map(a.value(), b.value(), |x, y| x - y),
            BinaryKind::Mul => binary_map(a.value(), b.value(), |x, y| x * y),
        };
        let (av, bv) = (a.value.clone(), b.value.clone());
        self.push(value, &[a, b], move |g, needs| {
            let ga = needs[0].then(|| match kind {
                BinaryKind::Add | BinaryKind::Sub => sum_to_shape(g, av.shape()),
                BinaryKind::Mul => mul_sum_to_shape(g, &bv, av.shape()),
            });
            let gb = needs[1].then(|| match kind {
                BinaryKind::Add => sum_to_shape(g, bv.shape()),
                BinaryKind::Sub => sum_to_shape(g, bv.shape()).map(|v| -v),
                BinaryKind::Mul => mul_sum_to_shape(g, &av, bv.shape()),
            });
            vec![ga, gb]
        })
    }

    /// Broadcasting addition.
    pub fn add(&self, a: &Var<T>, b: &Var<T>) -> Var<T> {
        self.binary(a, b, BinaryKind::Add)
    }

    pub fn sub(&self, a: &Var<T>, b: &Var<T>) -> Var<T> {
        self.binary(a, b, BinaryKind::Sub)
    }

    /// Broadcasting (Hadamard) product.
    pub fn mul(&self, a: &Var<T>, b: &Var<T>) -> Var<T> {
        self.binary(a, b, BinaryKind::Mul)
    }

    pub fn scale(&self, a: &Var<T>, s: f64) -> Var<T> {
        let s = T::of(s);
        self.unary_with(a, OpKind::Elementwise, move |x| x * s, move |_, _| s)
    }

    pub fn add_scalar(&self, a: &Var<T>, s: f64) -> Var<T> {
        let s = T::of(s);
        self.unary_with(a, OpKind::Elementwise, move |x| x + s, |_, _| T::one())
    }

    pub fn sigmoid(&self, a: &Var<T>) -> Var<T> {
        self.unary_with(a, OpKind::Elementwise, sigmoid, |_, y| y * (T::one() - y))
    }

    pub fn tanh(&self, a: &Var<T>) -> Var<T> {
        self.unary_with(a, OpKind::Elementwise, |x| x.tanh(), |_, y| T::one() - y * y)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&self, a: &Var<T>) -> Var<T> {
        self.unary_with(a, OpKind::Elementwise, gelu, |x, _| gelu_grad(x))
    }

    pub fn silu(&self, a: &Var<T>) -> Var<T> {
        self.unary_with(
            a,
            OpKind::Elementwise,
            |x| x * sigmoid(x),
            |x, _| {
                let s = sigmoid(x);
                s * (T::one() + x * (T::one() - s))
            },
        )
    }

    pub fn relu(&self, a: &Var<T>) -> Var<T> {
        self.unary_with(
            a,
            OpKind::Elementwise,
            |x| if x > T::zero() { x } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn square(&self, a: &Var<T>) -> Var<T> {
        self.unary_with(a, OpKind::Elementwise, |x| x * x, |x, _| x + x)
    }

    /// Elementwise function without a registered cost rule; the cost model reports it
    /// as uncovered.
    pub fn custom_unary(
        &self,
        name: &str,
        a: &Var<T>,
        f: impl Fn(T) -> T + 'static,
        df: impl Fn(T, T) -> T + 'static,
    ) -> Var<T> {
        self.unary_with(a, OpKind::Custom(name.to_string()), f, df)
    }

    /// `df(x, y)` is the derivative given input `x` and output `y`.
    fn unary_with(
        &self,
        a: &Var<T>,
        kind: OpKind,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + 'static,
    ) -> Var<T> {
        self.account(kind, a.value.numel() as u64);
        if self.symbolic {
            return self.meta(a.shape().to_vec());
        }
        let out = Arc::new(a.value.map(f));
        let (input, output) = (a.value.clone(), out.clone());
        self.push_shared(out, &[a], move |g, _| {
            let data = g
                .data()
                .iter()
                .zip(input.data())
                .zip(output.data())
                .map(|((&g, &x), &y)| g * df(x, y))
                .collect();
            vec![Some(Tensor::new(g.shape().to_vec(), data))]
        })
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum_all(&self, a: &Var<T>) -> Var<T> {
        self.account(OpKind::Reduce, a.value.numel() as u64);
        if self.symbolic {
            return self.meta(vec![]);
        }
        let shape = a.shape().to_vec();
        self.push(Tensor::scalar(a.value.sum()), &[a], move |g, _| vec![Some(Tensor::full(shape, g.item()))])
    }

    pub fn mean_all(&self, a: &Var<T>) -> Var<T> {
        let n = a.value.numel().max(1) as f64;
        let s = self.sum_all(a);
        self.scale(&s, 1.0 / n)
    }

    /// Sums over the axes where `shape` is 1 (inverse of broadcasting).
    pub fn sum_to(&self, a: &Var<T>, shape: &[usize]) -> Var<T> {
        assert_eq!(broadcast_shape(shape, a.shape()), a.shape(), "sum_to target {shape:?} vs {:?}", a.shape());
        self.account(OpKind::Reduce, a.value.numel() as u64);
        if self.symbolic {
            return self.meta(shape.to_vec());
        }
        let in_shape = a.shape().to_vec();
        self.push(sum_to_shape(a.value(), shape), &[a], move |g, _| vec![Some(expand_to(g, &in_shape))])
    }

    /// Mean over the trailing two axes, keeping them as size 1: `(N, C, H, W) -> (N, C, 1, 1)`.
    pub fn spatial_mean(&self, a: &Var<T>) -> Var<T> {
        let s = a.shape();
        assert_eq!(s.len(), 4, "spatial_mean expects NCHW");
        let hw = (s[2] * s[3]) as f64;
        let target = vec![s[0], s[1], 1, 1];
        let summed = self.sum_to(a, &target);
        self.scale(&summed, 1.0 / hw)
    }

    pub fn reshape(&self, a: &Var<T>, shape: &[usize]) -> Var<T> {
        assert_eq!(numel(shape), a.value.numel(), "reshape {:?} -> {shape:?}", a.shape());
        self.account(OpKind::View, 0);
        if self.symbolic {
            return self.meta(shape.to_vec());
        }
        let in_shape = a.shape().to_vec();
        let value = (*a.value).clone().reshape(shape.to_vec());
        self.push(value, &[a], move |g, _| vec![Some(g.clone().reshape(in_shape))])
    }

    pub fn permute(&self, a: &Var<T>, perm: &[usize]) -> Var<T> {
        assert_eq!(perm.len(), a.shape().len(), "permutation rank mismatch");
        let out_shape: Vec<usize> = perm.iter().map(|&p| a.shape()[p]).collect();
        self.account(OpKind::View, 0);
        if self.symbolic {
            return self.meta(out_shape);
        }
        let mut inverse = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        self.push(permute_tensor(a.value(), perm), &[a], move |g, _| vec![Some(permute_tensor(g, &inverse))])
    }

    /// Concatenation along `axis`.
    pub fn concat(&self, parts: &[&Var<T>], axis: usize) -> Var<T> {
        assert!(!parts.is_empty());
        let first = parts[0].shape().to_vec();
        let mut out_shape = first.clone();
        out_shape[axis] = parts.iter().map(|p| p.shape()[axis]).sum();
        for p in parts {
            assert_eq!(p.shape().len(), first.len());
            for (d, (&x, &y)) in p.shape().iter().zip(&first).enumerate() {
                assert!(d == axis || x == y, "concat shape mismatch {:?} vs {first:?}", p.shape());
            }
        }
        self.account(OpKind::View, 0);
        if self.symbolic {
            return self.meta(out_shape);
        }
        let outer: usize = first[..axis].iter().product();
        let tail: usize = first[axis + 1..].iter().product();
        let total_inner = out_shape[axis] * tail;
        let mut out = vec![T::zero(); numel(&out_shape)];
        let mut offset = 0;
        let mut extents = Vec::with_capacity(parts.len());
        for p in parts {
            let inner = p.shape()[axis] * tail;
            let src = p.value.data();
            for o in 0..outer {
                out[o * total_inner + offset..o * total_inner + offset + inner]
                    .copy_from_slice(&src[o * inner..(o + 1) * inner]);
            }
            extents.push((offset, inner, p.shape().to_vec()));
            offset += inner;
        }
        self.push(Tensor::new(out_shape, out), parts, move |g, needs| {
            extents
                .iter()
                .zip(needs)
                .map(|((off, inner, shape), &need)| {
                    need.then(|| {
                        let gd = g.data();
                        let mut part = Vec::with_capacity(outer * inner);
                        for o in 0..outer {
                            part.extend_from_slice(&gd[o * total_inner + off..o * total_inner + off + inner]);
                        }
                        Tensor::new(shape.clone(), part)
                    })
                })
                .collect()
        })
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&self, a: &Var<T>, axis: usize, start: usize, len: usize) -> Var<T> {
        let in_shape = a.shape().to_vec();
        assert!(start + len <= in_shape[axis], "narrow out of range");
        let mut out_shape = in_shape.clone();
        out_shape[axis] = len;
        self.account(OpKind::View, 0);
        if self.symbolic {
            return self.meta(out_shape);
        }
        let outer: usize = in_shape[..axis].iter().product();
        let tail: usize = in_shape[axis + 1..].iter().product();
        let (src_inner, inner, off) = (in_shape[axis] * tail, len * tail, start * tail);
        let src = a.value.data();
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            out.extend_from_slice(&src[o * src_inner + off..o * src_inner + off + inner]);
        }
        self.push(Tensor::new(out_shape, out), &[a], move |g, _| {
            let mut full = vec![T::zero(); numel(&in_shape)];
            let gd = g.data();
            for o in 0..outer {
                full[o * src_inner + off..o * src_inner + off + inner].copy_from_slice(&gd[o * inner..(o + 1) * inner]);
            }
            vec![Some(Tensor::new(in_shape, full))]
        })
    }

    /// Splits `a` along `axis` into equal chunks.
    pub fn chunk(&self, a: &Var<T>, chunks: usize, axis: usize) -> Vec<Var<T>> {
        let d = a.shape()[axis];
        assert_eq!(d % chunks, 0, "chunk: axis {axis} of size {d} not divisible by {chunks}");
        let step = d / chunks;
        (0..chunks).map(|i| self.narrow(a, axis, i * step, step)).collect()
    }

    /// Softmax over the last axis.
    pub fn softmax_last(&self, a: &Var<T>) -> Var<T> {
        self.account(OpKind::Softmax, a.value.numel() as u64);
        if self.symbolic {
            return self.meta(a.shape().to_vec());
        }
        let n = *a.shape().last().expect("softmax of a scalar");
        let mut out = a.value.data().to_vec();
        for row in out.chunks_mut(n) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v = *v / total;
            }
        }
        let out = Arc::new(Tensor::new(a.shape().to_vec(), out));
        let y = out.clone();
        self.push_shared(out, &[a], move |g, _| {
            let mut dx = vec![T::zero(); y.numel()];
            for ((dr, yr), gr) in dx.chunks_mut(n).zip(y.data().chunks(n)).zip(g.data().chunks(n)) {
                let dot: T = yr.iter().zip(gr).map(|(&y, &g)| y * g).sum();
                for ((d, &y), &g) in dr.iter_mut().zip(yr).zip(gr) {
                    *d = y * (g - dot);
                }
            }
            vec![Some(Tensor::new(y.shape().to_vec(), dx))]
        })
    }

    /// Batched matrix product over the last two axes. Leading axes must match exactly.
    pub fn bmm(&self, a: &Var<T>, b: &Var<T>, trans_a: bool, trans_b: bool) -> Var<T> {
        let (sa, sb) = (a.shape().to_vec(), b.shape().to_vec());
        assert!(sa.len() >= 2 && sa.len() == sb.len(), "bmm rank mismatch {sa:?} {sb:?}");
        let r = sa.len();
        assert_eq!(sa[..r - 2], sb[..r - 2], "bmm batch axes differ");
        let (m, ka) = if trans_a { (sa[r - 1], sa[r - 2]) } else { (sa[r - 2], sa[r - 1]) };
        let (kb, n) = if trans_b { (sb[r - 1], sb[r - 2]) } else { (sb[r - 2], sb[r - 1]) };
        assert_eq!(ka, kb, "bmm inner dimension mismatch {sa:?} x {sb:?}");
        let k = ka;
        let batch: usize = sa[..r - 2].iter().product();
        let mut out_shape = sa[..r - 2].to_vec();
        out_shape.extend([m, n]);
        self.account(OpKind::MatMul, (batch * m * n * k) as u64);
        if self.symbolic {
            return self.meta(out_shape);
        }
        let (ad, bd) = (a.value.data(), b.value.data());
        let mut out = vec![T::zero(); batch * m * n];
        for i in 0..batch {
            gemm(
                trans_a,
                trans_b,
                m,
                n,
                k,
                &ad[i * m * k..],
                &bd[i * k * n..],
                &mut out[i * m * n..(i + 1) * m * n],
                false,
            );
        }
        let (av, bv) = (a.value.clone(), b.value.clone());
        self.push(Tensor::new(out_shape, out), &[a, b], move |g, needs| {
            let gd = g.data();
            let ga = needs[0].then(|| {
                let mut da = vec![T::zero(); batch * m * k];
                for i in 0..batch {
                    let gi = &gd[i * m * n..];
                    let bi = &bv.data()[i * k * n..];
                    let dst = &mut da[i * m * k..(i + 1) * m * k];
                    if trans_a {
                        gemm(trans_b, true, k, m, n, bi, gi, dst, false);
                    } else {
                        gemm(false, !trans_b, m, k, n, gi, bi, dst, false);
                    }
                }
                Tensor::new(av.shape().to_vec(), da)
            });
            let gb = needs[1].then(|| {
                let mut db = vec![T::zero(); batch * k * n];
                for i in 0..batch {
                    let gi = &gd[i * m * n..];
                    let ai = &av.data()[i * m * k..];
                    let dst = &mut db[i * k * n..(i + 1) * k * n];
                    if trans_b {
                        gemm(true, trans_a, n, k, m, gi, ai, dst, false);
                    } else {
                        gemm(!trans_a, false, k, n, m, ai, gi, dst, false);
                    }
                }
                Tensor::new(bv.shape().to_vec(), db)
            });
            vec![ga, gb]
        })
    }

    /// Dense layer over the last axis: `x[.., in] · w[out, in]ᵀ + b[out]`.
    pub fn linear_last(&self, x: &Var<T>, w: &Var<T>, b: Option<&Var<T>>) -> Var<T> {
        let xs = x.shape().to_vec();
        let (fan_out, fan_in) = (w.shape()[0], w.shape()[1]);
        assert_eq!(*xs.last().unwrap(), fan_in, "linear: input width {xs:?} vs weight {:?}", w.shape());
        let rows = numel(&xs) / fan_in;
        let mut out_shape = xs.clone();
        *out_shape.last_mut().unwrap() = fan_out;
        self.account(OpKind::Dense, (rows * fan_in * fan_out) as u64);
        if self.symbolic {
            return self.meta(out_shape);
        }
        let mut out = vec![T::zero(); rows * fan_out];
        gemm(false, true, rows, fan_out, fan_in, x.value.data(), w.value.data(), &mut out, false);
        if let Some(b) = b {
            let bd = b.value.data();
            for row in out.chunks_mut(fan_out) {
                for (o, &bb) in row.iter_mut().zip(bd) {
                    *o += bb;
                }
            }
        }
        let (xv, wv) = (x.value.clone(), w.value.clone());
        let inputs: Vec<&Var<T>> = match b {
            Some(b) => vec![x, w, b],
            None => vec![x, w],
        };
        let has_bias = b.is_some();
        self.push(Tensor::new(out_shape, out), &inputs, move |g, needs| {
            let gd = g.data();
            let dx = needs[0].then(|| {
                let mut dx = vec![T::zero(); rows * fan_in];
                gemm(false, false, rows, fan_in, fan_out, gd, wv.data(), &mut dx, false);
                Tensor::new(xv.shape().to_vec(), dx)
            });
            let dw = needs[1].then(|| {
                let mut dw = vec![T::zero(); fan_out * fan_in];
                gemm(true, false, fan_out, fan_in, rows, gd, xv.data(), &mut dw, false);
                Tensor::new(vec![fan_out, fan_in], dw)
            });
            let mut grads = vec![dx, dw];
            if has_bias {
                grads.push(needs[2].then(|| {
                    let mut db = vec![T::zero(); fan_out];
                    for row in gd.chunks(fan_out) {
                        for (d, &v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    Tensor::new(vec![fan_out], db)
                }));
            }
            grads
        })
    }

    /// Mean squared error over all elements, as a rank-0 tensor.
    pub fn mse_loss(&self, pred: &Var<T>, target: &Var<T>) -> Var<T> {
        assert_eq!(pred.shape(), target.shape(), "mse_loss shape mismatch");
        let n = pred.value.numel();
        self.account(OpKind::Elementwise, n as u64);
        if self.symbolic {
            return self.meta(vec![]);
        }
        let (pv, tv) = (pred.value.clone(), target.value.clone());
        let sum: f64 = pv
            .data()
            .iter()
            .zip(tv.data())
            .map(|(&p, &t)| {
                let d = (p - t).as_f64();
                d * d
            })
            .sum();
        let value = Tensor::scalar(T::of(sum / n.max(1) as f64));
        self.push(value, &[pred, target], move |g, needs| {
            let k = g.item() * T::of(2.0 / n.max(1) as f64);
            let diff: Vec<T> = pv.data().iter().zip(tv.data()).map(|(&p, &t)| k * (p - t)).collect();
            let shape = pv.shape().to_vec();
            let gt = needs[1].then(|| Tensor::new(shape.clone(), diff.iter().map(|&v| -v).collect()));
            let gp = needs[0].then(|| Tensor::new(shape, diff));
            vec![gp, gt]
        })
    }

    /// Stochastic depth: in training mode each sample (leading axis) of `x` is
    /// zeroed with probability `p` and survivors are rescaled by `1 / (1 - p)`.
    /// Identity in evaluation mode.
    pub fn drop_path(&self, x: &Var<T>, p: f64) -> Var<T> {
        if !self.training || p <= 0.0 || self.symbolic {
            return x.clone();
        }
        let n = x.shape()[0];
        let keep = 1.0 - p;
        let mask: Vec<T> = self
            .bernoulli_keep(n, keep)
            .into_iter()
            .map(|k| if k && keep > 0.0 { T::of(1.0 / keep) } else { T::zero() })
            .collect();
        let mut mshape = vec![1; x.shape().len()];
        mshape[0] = n;
        self.mul(x, &Var::constant(Tensor::new(mshape, mask)))
    }
}

#[derive(Clone, Copy)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec())
    }

    #[test]
    fn broadcast_add_and_reduce() {
        let g = Graph::<f64>::with_grad();
        let a = g.leaf(t(&[2, 3], &[1., 2., 3., 4., 5., 6.]));
        let b = g.leaf(t(&[3], &[10., 20., 30.]));
        let y = g.add(&a, &b);
        assert_eq!(y.value().data(), &[11., 22., 33., 14., 25., 36.]);
        let grads = g.backward(&g.sum_all(&y));
        assert_eq!(grads.wrt(&b).unwrap().data(), &[2., 2., 2.]);
        assert_eq!(grads.wrt(&a).unwrap().data(), &[1.; 6]);
    }

    #[test]
    fn channel_broadcast_mul_gradients() {
        let g = Graph::<f64>::with_grad();
        let x = g.leaf(Tensor::from_fn(vec![2, 3, 2, 2], |i| i as f64));
        let s = g.leaf(t(&[1, 3, 1, 1], &[1., 2., 3.]));
        let y = g.mul(&x, &s);
        let grads = g.backward(&g.sum_all(&y));
        // d/ds_c = sum over n,h,w of x
        let mut expect = [0.0; 3];
        for i in 0..24 {
            expect[(i / 4) % 3] += i as f64;
        }
        assert_eq!(grads.wrt(&s).unwrap().data(), &expect);
    }

    #[test]
    fn permute_round_trip() {
        let g = Graph::<f64>::inference();
        let x = Var::constant(Tensor::from_fn(vec![2, 3, 4], |i| i as f64));
        let y = g.permute(&x, &[2, 0, 1]);
        assert_eq!(y.shape(), &[4, 2, 3]);
        // element (k, i, j) = x[i, j, k]
        assert_eq!(y.value().data()[1 * 6 + 1 * 3 + 2], (1 * 12 + 2 * 4 + 1) as f64);
        let z = g.permute(&y, &[1, 2, 0]);
        assert_eq!(z.value(), x.value());
    }

    #[test]
    fn concat_and_narrow_are_inverse() {
        let g = Graph::<f64>::inference();
        let a = Var::constant(Tensor::from_fn(vec![2, 1, 3], |i| i as f64));
        let b = Var::constant(Tensor::from_fn(vec![2, 2, 3], |i| 100.0 + i as f64));
        let c = g.concat(&[&a, &b], 1);
        assert_eq!(c.shape(), &[2, 3, 3]);
        assert_eq!(g.narrow(&c, 1, 0, 1).value(), a.value());
        assert_eq!(g.narrow(&c, 1, 1, 2).value(), b.value());
    }

    #[test]
    fn softmax_of_singleton_is_one() {
        let g = Graph::<f64>::inference();
        let x = Var::constant(t(&[3, 1], &[-5.0, 0.0, 7.0]));
        assert_eq!(g.softmax_last(&x).value().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn bmm_matches_naive_all_transposes() {
        let a = Tensor::<f64>::from_fn(vec![2, 3, 4], |i| (i as f64 * 0.37).sin());
        let b = Tensor::<f64>::from_fn(vec![2, 4, 5], |i| (i as f64 * 0.11).cos());
        let g = Graph::<f64>::inference();
        let c = g.bmm(&Var::constant(a.clone()), &Var::constant(b.clone()), false, false);
        let at = g.permute(&Var::constant(a.clone()), &[0, 2, 1]);
        let bt = g.permute(&Var::constant(b.clone()), &[0, 2, 1]);
        let c2 = g.bmm(&at, &bt, true, true);
        assert!(c.value().max_abs_diff(c2.value()) < 1e-12);
        for bi in 0..2 {
            for i in 0..3 {
                for j in 0..5 {
                    let mut s = 0.0;
                    for p in 0..4 {
                        s += a.data()[bi * 12 + i * 4 + p] * b.data()[bi * 20 + p * 5 + j];
                    }
                    assert!((c.value().data()[bi * 15 + i * 5 + j] - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn drop_path_is_identity_in_eval() {
        let g = Graph::<f64>::inference();
        let x = Var::constant(Tensor::ones(vec![4, 2]));
        assert_eq!(g.drop_path(&x, 1.0).value(), x.value());
    }

    #[test]
    fn drop_path_with_p_one_drops_everything_in_training() {
        let g = Graph::<f64>::stochastic(crate::rng::SeedSpec::new(1, 2));
        let x = Var::constant(Tensor::ones(vec![4, 2]));
        assert!(g.drop_path(&x, 1.0).value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn symbolic_mode_tracks_shapes_and_costs() {
        let g = Graph::<f32>::symbolic();
        let x = Var::constant(Tensor::meta(vec![2, 8]));
        let w = Var::constant(Tensor::meta(vec![4, 8]));
        let y = g.linear_last(&x, &w, None);
        let z = g.gelu(&y);
        assert_eq!(z.shape(), &[2, 4]);
        assert!(z.value().is_meta());
        assert_eq!(g.cost().total_macs(), 2 * 8 * 4 + 8);
    }
}
