//! Windowed structural similarity with a separable Gaussian window.

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;

/// Normalized 1-D Gaussian taps of length `min(len, WINDOW)`, centred on the window.
pub fn gaussian_taps(len: usize) -> Vec<f64> {
    let len = len.clamp(1, WINDOW);
    let centre = (len - 1) as f64 / 2.0;
    let taps: Vec<f64> = (0..len)
        .map(|i| {
            let d = i as f64 - centre;
            (-d * d / (2.0 * SIGMA * SIGMA)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter().map(|t| t / total).collect()
}

/// Valid-mode separable correlation of a `h × w` plane.
fn filter(plane: &[f64], h: usize, w: usize, ty: &[f64], tx: &[f64]) -> Vec<f64> {
    let (oh, ow) = (h - ty.len() + 1, w - tx.len() + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let line = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = tx.iter().zip(&line[x..]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for (k, t) in ty.iter().enumerate() {
            let src = &rows[(y + k) * ow..(y + k + 1) * ow];
            for (o, v) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                *o += t * v;
            }
        }
    }
    out
}

/// Mean SSIM of two single-channel `h × w` planes with dynamic range `data_range`.
/// Inputs are clamped to `[0, data_range]`. Frames smaller than the window use a
/// truncated, renormalized window.
pub fn ssim_plane(a: &[f32], b: &[f32], h: usize, w: usize, data_range: f64) -> f64 {
    assert_eq!(a.len(), h * w);
    assert_eq!(b.len(), h * w);
    let c1 = (K1 * data_range).powi(2);
    let c2 = (K2 * data_range).powi(2);
    let ty = gaussian_taps(h);
    let tx = gaussian_taps(w);
    let x: Vec<f64> = a.iter().map(|&v| (v as f64).clamp(0.0, data_range)).collect();
    let y: Vec<f64> = b.iter().map(|&v| (v as f64).clamp(0.0, data_range)).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let [mx, my, sxx, syy, sxy] = [&x, &y, &xx, &yy, &xy].map(|p| filter(p, h, w, &ty, &tx));
    let n = mx.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cov = sxy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    total / n as f64
}

/// Mean SSIM over the channels of a `(C, H, W)` frame.
pub fn ssim_frame(a: &[f32], b: &[f32], c: usize, h: usize, w: usize) -> f64 {
    let plane = h * w;
    (0..c)
        .map(|ch| ssim_plane(&a[ch * plane..(ch + 1) * plane], &b[ch * plane..(ch + 1) * plane], h, w, 1.0))
        .sum::<f64>()
        / c as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taps_are_normalized_and_symmetric() {
        for len in [1, 4, 7, 11] {
            let t = gaussian_taps(len);
            assert_eq!(t.len(), len);
            assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for i in 0..len {
                assert!((t[i] - t[len - 1 - i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_images_closed_form() {
        let zeros = vec![0.0f32; 16 * 16];
        let ones = vec![1.0f32; 16 * 16];
        let c1 = (K1 * 1.0f64).powi(2);
        assert!((ssim_plane(&zeros, &ones, 16, 16, 1.0) - c1 / (1.0 + c1)).abs() < 1e-12);
    }
}
