//! 2-D convolution over NCHW tensors.

use super::{Graph, OpKind, Var};
use crate::tensor::{gemm, Float, Tensor};

/// Hyper-parameters of a 2-D convolution. Padding is symmetric and zero-valued.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvParams {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl Default for ConvParams {
    fn default() -> Self {
        Self { stride: 1, padding: 0, dilation: 1, groups: 1 }
    }
}

impl ConvParams {
    /// Stride 1 with "same" padding for an odd kernel.
    pub fn same(kernel: usize) -> Self {
        Self { padding: kernel / 2, ..Self::default() }
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn output_size(&self, input: usize, kernel: usize) -> usize {
        let span = self.dilation * (kernel - 1) + 1;
        assert!(input + 2 * self.padding >= span, "kernel {kernel} larger than padded input {input}");
        (input + 2 * self.padding - span) / self.stride + 1
    }
}

#[derive(Clone, Copy)]
struct Geometry {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    p: ConvParams,
}

impl Geometry {
    fn cin_g(&self) -> usize {
        self.cin / self.p.groups
    }

    fn cout_g(&self) -> usize {
        self.cout / self.p.groups
    }

    fn k(&self) -> usize {
        self.cin_g() * self.kh * self.kw
    }

    fn pix_out(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.p.stride == 1 && self.p.padding == 0
    }

    fn is_depthwise(&self) -> bool {
        self.p.groups == self.cin && self.cout == self.cin && self.p.groups > 1
    }

    /// Taps `[lo, hi)` of a kernel of length `k` that land inside an input of
    /// length `len` for output index `o`.
    fn valid_taps(&self, o: usize, k: usize, len: usize) -> (usize, usize) {
        let start = (o * self.p.stride) as isize - self.p.padding as isize;
        let d = self.p.dilation as isize;
        let lo = (0..k).find(|&j| start + j as isize * d >= 0).unwrap_or(k);
        let hi = (lo..k).find(|&j| start + j as isize * d >= len as isize).unwrap_or(k);
        (lo, hi.max(lo))
    }

    /// Output indices `[lo, hi)` whose tap `k` lands inside an input of length `len`.
    fn valid(&self, out_len: usize, k: usize, len: usize) -> (usize, usize) {
        let off = (k * self.p.dilation) as isize - self.p.padding as isize;
        let s = self.p.stride as isize;
        let first = |bound: isize| -> usize {
            let need = bound - off;
            if need <= 0 {
                0
            } else {
                ((need + s - 1) / s) as usize
            }
        };
        let lo = first(0).min(out_len);
        let hi = first(len as isize).min(out_len);
        (lo, hi.max(lo))
    }
}

/// Unfolds the channels `[c0, c0 + cin_g)` of one image into a `K × (Ho·Wo)` matrix.
fn im2col<T: Float>(geo: &Geometry, img: &[T], c0: usize, cols: &mut [T]) {
    let pix = geo.pix_out();
    let (s, d, pad) = (geo.p.stride, geo.p.dilation, geo.p.padding);
    for c in 0..geo.cin_g() {
        let plane = &img[(c0 + c) * geo.h * geo.w..(c0 + c + 1) * geo.h * geo.w];
        for ki in 0..geo.kh {
            let (hlo, hhi) = geo.valid(geo.ho, ki, geo.h);
            for kj in 0..geo.kw {
                let (wlo, whi) = geo.valid(geo.wo, kj, geo.w);
                let row = ((c * geo.kh + ki) * geo.kw + kj) * pix;
                let block = &mut cols[row..row + pix];
                if wlo == whi {
                    block.fill(T::zero());
                    continue;
                }
                block[..hlo * geo.wo].fill(T::zero());
                block[hhi * geo.wo..].fill(T::zero());
                for oh in hlo..hhi {
                    let ih = oh * s + ki * d - pad;
                    let line = &plane[ih * geo.w..(ih + 1) * geo.w];
                    let dst = &mut block[oh * geo.wo..(oh + 1) * geo.wo];
                    dst[..wlo].fill(T::zero());
                    dst[whi..].fill(T::zero());
                    let iw0 = wlo * s + kj * d - pad;
                    if s == 1 {
                        dst[wlo..whi].copy_from_slice(&line[iw0..iw0 + (whi - wlo)]);
                    } else {
                        for (i, o) in dst[wlo..whi].iter_mut().enumerate() {
                            *o = line[iw0 + i * s];
                        }
                    }
                }
            }
        }
    }
}

/// Transposed [`im2col`]: one row of `K` taps per output pixel, `(Ho·Wo) × K`.
///
/// Taps that fall in the padding are never written, so `rows` must start zeroed
/// and may then be reused across images of the same geometry.
fn im2row<T: Float>(geo: &Geometry, img: &[T], c0: usize, rows: &mut [T]) {
    let (k, kw, hw) = (geo.k(), geo.kw, geo.h * geo.w);
    let (s, d, pad) = (geo.p.stride, geo.p.dilation, geo.p.padding);
    let taps: Vec<(usize, usize)> = (0..geo.wo).map(|ow| geo.valid_taps(ow, kw, geo.w)).collect();
    let planes = &img[c0 * hw..(c0 + geo.cin_g()) * hw];
    for ki in 0..geo.kh {
        let (hlo, hhi) = geo.valid(geo.ho, ki, geo.h);
        for oh in hlo..hhi {
            let ih = oh * s + ki * d - pad;
            for (ow, &(jlo, jhi)) in taps.iter().enumerate() {
                if jlo == jhi {
                    continue;
                }
                let iw0 = ow * s + jlo * d - pad;
                let base = (oh * geo.wo + ow) * k + ki * kw;
                for (ci, plane) in planes.chunks_exact(hw).enumerate() {
                    let line = &plane[ih * geo.w + iw0..];
                    let seg = &mut rows[base + ci * geo.kh * kw..];
                    for j in jlo..jhi {
                        seg[j] = line[(j - jlo) * d];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters a column matrix back onto image channels.
fn col2im<T: Float>(geo: &Geometry, cols: &[T], c0: usize, img: &mut [T]) {
    let pix = geo.pix_out();
    let (s, d, pad) = (geo.p.stride, geo.p.dilation, geo.p.padding);
    for c in 0..geo.cin_g() {
        let plane = &mut img[(c0 + c) * geo.h * geo.w..(c0 + c + 1) * geo.h * geo.w];
        for ki in 0..geo.kh {
            let (hlo, hhi) = geo.valid(geo.ho, ki, geo.h);
            for kj in 0..geo.kw {
                let (wlo, whi) = geo.valid(geo.wo, kj, geo.w);
                if wlo == whi {
                    continue;
                }
                let row = ((c * geo.kh + ki) * geo.kw + kj) * pix;
                for oh in hlo..hhi {
                    let ih = oh * s + ki * d - pad;
                    let src = &cols[row + oh * geo.wo + wlo..row + oh * geo.wo + whi];
                    let iw0 = wlo * s + kj * d - pad;
                    let line = &mut plane[ih * geo.w..(ih + 1) * geo.w];
                    if s == 1 {
                        for (o, &v) in line[iw0..iw0 + src.len()].iter_mut().zip(src) {
                            *o += v;
                        }
                    } else {
                        for (i, &v) in src.iter().enumerate() {
                            line[iw0 + i * s] += v;
                        }
                    }
                }
            }
        }
    }
}

fn conv_forward<T: Float>(geo: &Geometry, x: &[T], w: &[T], out: &mut [T]) {
    if geo.is_depthwise() {
        return depthwise_forward(geo, x, w, out);
    }
    let (pix, k, cin_g, cout_g) = (geo.pix_out(), geo.k(), geo.cin_g(), geo.cout_g());
    let mut cols = if geo.is_pointwise() { Vec::new() } else { vec![T::zero(); k * pix] };
    for n in 0..geo.n {
        let img = &x[n * geo.cin * geo.h * geo.w..(n + 1) * geo.cin * geo.h * geo.w];
        for g in 0..geo.p.groups {
            let colmat: &[T] = if geo.is_pointwise() {
                &img[g * cin_g * pix..(g + 1) * cin_g * pix]
            } else {
                im2col(geo, img, g * cin_g, &mut cols);
                &cols
            };
            let dst = &mut out[(n * geo.cout + g * cout_g) * pix..(n * geo.cout + (g + 1) * cout_g) * pix];
            gemm(false, false, cout_g, pix, k, &w[g * cout_g * k..], colmat, dst, false);
        }
    }
}

fn conv_backward<T: Float>(
    geo: &Geometry,
    x: &[T],
    w: &[T],
    gout: &[T],
    dx: Option<&mut [T]>,
    dw: Option<&mut [T]>,
) {
    if geo.is_depthwise() {
        return depthwise_backward(geo, x, w, gout, dx, dw);
    }
    let (pix, k, cin_g, cout_g) = (geo.pix_out(), geo.k(), geo.cin_g(), geo.cout_g());
    let img_len = geo.cin * geo.h * geo.w;
    let mut cols = vec![T::zero(); if geo.is_pointwise() { 0 } else { k * pix }];
    let mut dcols = vec![T::zero(); if dx.is_some() && !geo.is_pointwise() { k * pix } else { 0 }];
    let mut dx = dx;
    let mut dw = dw;
    for n in 0..geo.n {
        let img = &x[n * img_len..(n + 1) * img_len];
        for g in 0..geo.p.groups {
            let go = &gout[(n * geo.cout + g * cout_g) * pix..(n * geo.cout + (g + 1) * cout_g) * pix];
            let wg = &w[g * cout_g * k..(g + 1) * cout_g * k];
            if let Some(dw) = dw.as_deref_mut() {
                let dwg = &mut dw[g * cout_g * k..(g + 1) * cout_g * k];
                if geo.is_pointwise() {
                    gemm(false, true, cout_g, k, pix, go, &img[g * cin_g * pix..(g + 1) * cin_g * pix], dwg, true);
                } else {
                    im2row(geo, img, g * cin_g, &mut cols);
                    gemm(false, false, cout_g, k, pix, go, &cols, dwg, true);
                }
            }
            if let Some(dx) = dx.as_deref_mut() {
                let dimg = &mut dx[n * img_len..(n + 1) * img_len];
                if geo.is_pointwise() {
                    let dst = &mut dimg[g * cin_g * pix..(g + 1) * cin_g * pix];
                    gemm(true, false, k, pix, cout_g, wg, go, dst, true);
                } else {
                    gemm(true, false, k, pix, cout_g, wg, go, &mut dcols, false);
                    col2im(geo, &dcols, g * cin_g, dimg);
                }
            }
        }
    }
}

fn depthwise_forward<T: Float>(geo: &Geometry, x: &[T], w: &[T], out: &mut [T]) {
    let (hw, pix, kk) = (geo.h * geo.w, geo.pix_out(), geo.kh * geo.kw);
    let (s, d, pad) = (geo.p.stride, geo.p.dilation, geo.p.padding);
    for n in 0..geo.n {
        for c in 0..geo.cin {
            let plane = &x[(n * geo.cin + c) * hw..(n * geo.cin + c + 1) * hw];
            let wc = &w[c * kk..(c + 1) * kk];
            let dst = &mut out[(n * geo.cin + c) * pix..(n * geo.cin + c + 1) * pix];
            dst.fill(T::zero());
            for ki in 0..geo.kh {
                let (hlo, hhi) = geo.valid(geo.ho, ki, geo.h);
                for oh in hlo..hhi {
                    let ih = oh * s + ki * d - pad;
                    let line = &plane[ih * geo.w..(ih + 1) * geo.w];
                    let row = &mut dst[oh * geo.wo..(oh + 1) * geo.wo];
                    for kj in 0..geo.kw {
                        let wv = wc[ki * geo.kw + kj];
                        let (wlo, whi) = geo.valid(geo.wo, kj, geo.w);
                        if wlo == whi {
                            continue;
                        }
                        let iw0 = wlo * s + kj * d - pad;
                        for (i, o) in row[wlo..whi].iter_mut().enumerate() {
                            *o += wv * line[iw0 + i * s];
                        }
                    }
                }
            }
        }
    }
}

fn depthwise_backward<T: Float>(
    geo: &Geometry,
    x: &[T],
    w: &[T],
    gout: &[T],
    mut dx: Option<&mut [T]>,
    mut dw: Option<&mut [T]>,
) {
    let (hw, pix, kk) = (geo.h * geo.w, geo.pix_out(), geo.kh * geo.kw);
    let (s, d, pad) = (geo.p.stride, geo.p.dilation, geo.p.padding);
    for n in 0..geo.n {
        for c in 0..geo.cin {
            let base = (n * geo.cin + c) * hw;
            let plane = &x[base..base + hw];
            let go = &gout[(n * geo.cin + c) * pix..(n * geo.cin + c + 1) * pix];
            for ki in 0..geo.kh {
                let (hlo, hhi) = geo.valid(geo.ho, ki, geo.h);
                for kj in 0..geo.kw {
                    let (wlo, whi) = geo.valid(geo.wo, kj, geo.w);
                    if wlo == whi {
                        continue;
                    }
                    let iw0 = wlo * s + kj * d - pad;
                    let widx = c * kk + ki * geo.kw + kj;
                    let wv = w[widx];
                    let mut acc = T::zero();
                    for oh in hlo..hhi {
                        let ih = oh * s + ki * d - pad;
                        let g = &go[oh * geo.wo + wlo..oh * geo.wo + whi];
                        let line = &plane[ih * geo.w..(ih + 1) * geo.w];
                        for (i, &gv) in g.iter().enumerate() {
                            acc += gv * line[iw0 + i * s];
                        }
                        if let Some(dx) = dx.as_deref_mut() {
                            let dl = &mut dx[base + ih * geo.w..base + (ih + 1) * geo.w];
                            for (i, &gv) in g.iter().enumerate() {
                                dl[iw0 + i * s] += gv * wv;
                            }
                        }
                    }
                    if let Some(dw) = dw.as_deref_mut() {
                        dw[widx] += acc;
                    }
                }
            }
        }
    }
}

impl<T: Float> Graph<T> {
    /// Convolution of `x: (N, Cin, H, W)` with `w: (Cout, Cin / groups, kh, kw)` plus optional bias `(Cout)`.
    pub fn conv2d(&self, x: &Var<T>, w: &Var<T>, bias: Option<&Var<T>>, p: ConvParams) -> Var<T> {
        let (xs, ws) = (x.shape(), w.shape());
        assert_eq!(xs.len(), 4, "conv2d input must be NCHW, got {xs:?}");
        assert_eq!(ws.len(), 4, "conv2d weight must be 4-D, got {ws:?}");
        assert!(p.groups >= 1 && xs[1] % p.groups == 0 && ws[0] % p.groups == 0, "bad groups {p:?}");
        assert_eq!(ws[1], xs[1] / p.groups, "conv2d: weight {ws:?} does not fit input {xs:?} with {p:?}");
        let geo = Geometry {
            n: xs[0],
            cin: xs[1],
            h: xs[2],
            w: xs[3],
            cout: ws[0],
            kh: ws[2],
            kw: ws[3],
            ho: p.output_size(xs[2], ws[2]),
            wo: p.output_size(xs[3], ws[3]),
            p,
        };
        let out_shape = vec![geo.n, geo.cout, geo.ho, geo.wo];
        let macs = geo.n * geo.cout * geo.pix_out() * geo.k();
        self.account(OpKind::Conv, macs as u64);
        if self.symbolic {
            return self.meta(out_shape);
        }
        let mut out = vec![T::zero(); geo.n * geo.cout * geo.pix_out()];
        conv_forward(&geo, x.value.data(), w.value.data(), &mut out);
        if let Some(b) = bias {
            assert_eq!(b.shape(), &[geo.cout], "conv2d bias shape");
            let pix = geo.pix_out();
            for (i, chunk) in out.chunks_mut(pix).enumerate() {
                let bv = b.value.data()[i % geo.cout];
                chunk.iter_mut().for_each(|v| *v += bv);
            }
        }
        let (xv, wv) = (x.value.clone(), w.value.clone());
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        let has_bias = bias.is_some();
        self.push(Tensor::new(out_shape, out), &inputs, move |g, needs| {
            let mut dx = needs[0].then(|| vec![T::zero(); xv.numel()]);
            let mut dw = needs[1].then(|| vec![T::zero(); wv.numel()]);
            conv_backward(&geo, xv.data(), wv.data(), g.data(), dx.as_deref_mut(), dw.as_deref_mut());
            let mut grads = vec![
                dx.map(|d| Tensor::new(xv.shape().to_vec(), d)),
                dw.map(|d| Tensor::new(wv.shape().to_vec(), d)),
            ];
            if has_bias {
                grads.push(needs[2].then(|| {
                    let mut db = vec![T::zero(); geo.cout];
                    for (i, chunk) in g.data().chunks(geo.pix_out()).enumerate() {
                        db[i % geo.cout] += chunk.iter().copied().sum();
                    }
                    Tensor::new(vec![geo.cout], db)
                }));
            }
            grads
        })
    }

    /// Rearranges `(N, C·r², H, W)` into `(N, C, H·r, W·r)`.
    pub fn pixel_shuffle(&self, x: &Var<T>, r: usize) -> Var<T> {
        let s = x.shape().to_vec();
        assert_eq!(s[1] % (r * r), 0, "pixel_shuffle: channels {} not divisible by {}", s[1], r * r);
        let c = s[1] / (r * r);
        let v = self.reshape(x, &[s[0], c, r, r, s[2], s[3]]);
        let v = self.permute(&v, &[0, 1, 4, 2, 5, 3]);
        self.reshape(&v, &[s[0], c, s[2] * r, s[3] * r])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct definition of the convolution sum.
    fn naive(x: &Tensor<f64>, w: &Tensor<f64>, p: ConvParams) -> Tensor<f64> {
        let (n, cin, h, wd) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
        let (cout, cig, kh, kw) = (w.dim(0), w.dim(1), w.dim(2), w.dim(3));
        let (ho, wo) = (p.output_size(h, kh), p.output_size(wd, kw));
        let cog = cout / p.groups;
        let mut out = Tensor::zeros(vec![n, cout, ho, wo]);
        for b in 0..n {
            for co in 0..cout {
                let g = co / cog;
                for oh in 0..ho {
                    for ow in 0..wo {
                        let mut s = 0.0;
                        for ci in 0..cig {
                            for i in 0..kh {
                                for j in 0..kw {
                                    let ih = (oh * p.stride + i * p.dilation) as isize - p.padding as isize;
                                    let iw = (ow * p.stride + j * p.dilation) as isize - p.padding as isize;
                                    if ih < 0 || iw < 0 || ih >= h as isize || iw >= wd as isize {
                                        continue;
                                    }
                                    let c = g * cig + ci;
                                    s += x.data()[((b * cin + c) * h + ih as usize) * wd + iw as usize]
                                        * w.data()[((co * cig + ci) * kh + i) * kw + j];
                                }
                            }
                        }
                        out.data_mut()[((b * cout + co) * ho + oh) * wo + ow] = s;
                    }
                }
            }
        }
        out
    }

    fn check(xs: [usize; 4], ws: [usize; 4], p: ConvParams) {
        let x = Tensor::from_fn(xs.to_vec(), |i| ((i * 7919) % 23) as f64 / 11.0 - 1.0);
        let w = Tensor::from_fn(ws.to_vec(), |i| ((i * 104729) % 17) as f64 / 8.0 - 1.0);
        let g = Graph::<f64>::inference();
        let y = g.conv2d(&Var::constant(x.clone()), &Var::constant(w.clone()), None, p);
        let expect = naive(&x, &w, p);
        assert_eq!(y.shape(), expect.shape());
        assert!(y.value().max_abs_diff(&expect) < 1e-10, "{p:?}");
    }

    #[test]
    fn matches_direct_sum() {
        check([2, 3, 7, 6], [4, 3, 3, 3], ConvParams::same(3));
        check([1, 2, 8, 8], [3, 2, 3, 3], ConvParams::same(3).stride(2));
        check([1, 4, 9, 9], [4, 1, 5, 5], ConvParams::default().padding(6).dilation(3).groups(4));
        check([2, 4, 6, 6], [6, 2, 3, 3], ConvParams::same(3).groups(2));
        check([2, 5, 4, 4], [3, 5, 1, 1], ConvParams::default());
        check([1, 3, 7, 7], [3, 1, 7, 7], ConvParams::same(7).groups(3));
        check([1, 2, 4, 4], [2, 1, 7, 7], ConvParams::default().padding(9).dilation(3).groups(2));
        check([1, 2, 2, 3], [3, 2, 5, 5], ConvParams::same(5));
    }

    fn check_backward(xs: [usize; 4], ws: [usize; 4], p: ConvParams) {
        let x = Tensor::from_fn(xs.to_vec(), |i| ((i * 7919) % 23) as f64 / 11.0 - 1.0);
        let w = Tensor::from_fn(ws.to_vec(), |i| ((i * 104729) % 17) as f64 / 8.0 - 1.0);
        let y = naive(&x, &w, p);
        let go = Tensor::from_fn(y.shape().to_vec(), |i| ((i * 31) % 13) as f64 / 6.0 - 1.0);
        let g = Graph::<f64>::with_grad();
        let (xv, wv) = (g.leaf(x.clone()), g.leaf(w.clone()));
        let out = g.conv2d(&xv, &wv, None, p);
        let loss = g.sum_all(&g.mul(&out, &Var::constant(go.clone())));
        let grads = g.backward(&loss);
        let dot = |a: &Tensor<f64>| a.data().iter().zip(go.data()).map(|(u, v)| u * v).sum::<f64>();
        let basis = |t: &Tensor<f64>, i: usize| Tensor::from_fn(t.shape().to_vec(), |j| if i == j { 1.0 } else { 0.0 });
        let dx = grads.wrt(&xv).unwrap();
        for i in 0..x.numel() {
            assert!((dx.data()[i] - dot(&naive(&basis(&x, i), &w, p))).abs() < 1e-10, "dx {p:?}");
        }
        let dw = grads.wrt(&wv).unwrap();
        for i in 0..w.numel() {
            assert!((dw.data()[i] - dot(&naive(&x, &basis(&w, i), p))).abs() < 1e-10, "dw {p:?}");
        }
    }

    #[test]
    fn backward_matches_direct_sum() {
        check_backward([2, 3, 7, 6], [4, 3, 3, 3], ConvParams::same(3));
        check_backward([1, 2, 8, 7], [3, 2, 3, 3], ConvParams::same(3).stride(2));
        check_backward([1, 2, 9, 9], [2, 2, 3, 3], ConvParams::default().padding(2).dilation(2).stride(2));
        check_backward([1, 4, 6, 6], [4, 1, 3, 3], ConvParams::same(3).groups(4));
        check_backward([2, 4, 5, 5], [6, 2, 3, 3], ConvParams::same(3).groups(2));
        check_backward([2, 5, 4, 4], [3, 5, 1, 1], ConvParams::default());
        check_backward([1, 2, 3, 3], [2, 1, 7, 7], ConvParams::same(7).groups(2));
        check_backward([1, 2, 4, 4], [2, 1, 7, 7], ConvParams::default().padding(9).dilation(3).groups(2));
        check_backward([1, 2, 2, 3], [3, 2, 5, 5], ConvParams::same(5));
    }

    #[test]
    fn pixel_shuffle_layout() {
        let g = Graph::<f64>::inference();
        let x = Var::constant(Tensor::from_fn(vec![1, 4, 1, 1], |i| i as f64));
        let y = g.pixel_shuffle(&x, 2);
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.value().data(), &[0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn conv_cost_counts_macs() {
        let g = Graph::<f32>::symbolic();
        let x = Var::constant(Tensor::meta(vec![1, 3, 8, 8]));
        let w = Var::constant(Tensor::meta(vec![16, 3, 3, 3]));
        let y = g.conv2d(&x, &w, None, ConvParams::same(3).stride(2));
        assert_eq!(y.shape(), &[1, 16, 4, 4]);
        assert_eq!(g.cost().macs_for(&OpKind::Conv), 16 * 16 * 27);
    }
}
