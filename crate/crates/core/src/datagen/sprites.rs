//! Sprite and background sources: IDX / CIFAR-10 readers and a procedural
//! stand-in used when no image files are available.

use std::path::{Path, PathBuf};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{derive_rng, streams, SeedSpec};

/// Single-channel intensity image in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Sprite {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Sprite {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), height * width, "sprite data length");
        Self { height, width, data }
    }

    pub fn at(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

/// Multi-channel image in `[0, 1]`, `(C, H, W)` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Image {
    /// Bilinear resize with half-pixel centres and edge clamping.
    pub fn resize(&self, height: usize, width: usize) -> Image {
        let (sh, sw) = (self.height as f64 / height as f64, self.width as f64 / width as f64);
        let mut data = Vec::with_capacity(self.channels * height * width);
        for c in 0..self.channels {
            let plane = &self.data[c * self.height * self.width..(c + 1) * self.height * self.width];
            for y in 0..height {
                let fy = ((y as f64 + 0.5) * sh - 0.5).clamp(0.0, (self.height - 1) as f64);
                let (y0, ty) = (fy.floor() as usize, fy - fy.floor());
                let y1 = (y0 + 1).min(self.height - 1);
                for x in 0..width {
                    let fx = ((x as f64 + 0.5) * sw - 0.5).clamp(0.0, (self.width - 1) as f64);
                    let (x0, tx) = (fx.floor() as usize, fx - fx.floor());
                    let x1 = (x0 + 1).min(self.width - 1);
                    let p = |yy: usize, xx: usize| plane[yy * self.width + xx] as f64;
                    let top = p(y0, x0) * (1.0 - tx) + p(y0, x1) * tx;
                    let bottom = p(y1, x0) * (1.0 - tx) + p(y1, x1) * tx;
                    data.push((top * (1.0 - ty) + bottom * ty) as f32);
                }
            }
        }
        Image { channels: self.channels, height, width, data }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads an uncompressed IDX3 image file (magic `0x00000803`).
pub fn read_idx_images(path: &Path) -> Result<Vec<Sprite>> {
    let bytes = read(path)?;
    parse_idx_images(&bytes).map_err(|m| Error::format(path, m))
}

pub fn parse_idx_images(bytes: &[u8]) -> std::result::Result<Vec<Sprite>, String> {
    let word = |i: usize| -> std::result::Result<usize, String> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize)
            .ok_or_else(|| "truncated IDX header".to_string())
    };
    if word(0)? != 0x0803 {
        return Err(format!("bad IDX magic {:#010x}", word(0)?));
    }
    let (n, h, w) = (word(1)?, word(2)?, word(3)?);
    let body = &bytes[16..];
    if body.len() != n * h * w {
        return Err(format!("IDX body has {} bytes, header promises {}", body.len(), n * h * w));
    }
    Ok(body
        .chunks_exact(h * w)
        .map(|c| Sprite::new(h, w, c.iter().map(|&v| v as f32 / 255.0).collect()))
        .collect())
}

/// Reads a CIFAR-10 binary batch: records of one label byte and a 3×32×32 image.
pub fn read_cifar_batch(path: &Path) -> Result<Vec<Image>> {
    let bytes = read(path)?;
    const REC: usize = 1 + 3 * 32 * 32;
    if bytes.len() % REC != 0 {
        return Err(Error::format(path, format!("length {} is not a multiple of {REC}", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(REC)
        .map(|r| Image { channels: 3, height: 32, width: 32, data: r[1..].iter().map(|&v| v as f32 / 255.0).collect() })
        .collect())
}

/// Which glyph family a procedural source draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GlyphFamily {
    Digits,
    Fashion,
}

const DIGITS: [&[&[(f64, f64)]]; 10] = [
    &[&[(0.5, 0.0), (0.2, 0.15), (0.1, 0.5), (0.2, 0.85), (0.5, 1.0), (0.8, 0.85), (0.9, 0.5), (0.8, 0.15), (0.5, 0.0)]],
    &[&[(0.3, 0.2), (0.55, 0.0), (0.55, 1.0)]],
    &[&[(0.15, 0.2), (0.45, 0.0), (0.8, 0.1), (0.85, 0.35), (0.15, 1.0), (0.9, 1.0)]],
    &[&[(0.15, 0.1), (0.5, 0.0), (0.8, 0.2), (0.45, 0.5), (0.85, 0.75), (0.5, 1.0), (0.15, 0.9)]],
    &[&[(0.7, 1.0), (0.7, 0.0), (0.1, 0.65), (0.9, 0.65)]],
    &[&[(0.85, 0.0), (0.2, 0.0), (0.15, 0.45), (0.6, 0.4), (0.85, 0.65), (0.6, 1.0), (0.15, 0.9)]],
    &[&[(0.75, 0.0), (0.3, 0.3), (0.15, 0.7), (0.4, 1.0), (0.8, 0.85), (0.75, 0.55), (0.2, 0.6)]],
    &[&[(0.1, 0.0), (0.9, 0.0), (0.4, 1.0)], &[(0.3, 0.5), (0.75, 0.5)]],
    &[&[(0.5, 0.5), (0.2, 0.3), (0.5, 0.0), (0.8, 0.25), (0.5, 0.5), (0.15, 0.75), (0.5, 1.0), (0.85, 0.75), (0.5, 0.5)]],
    &[&[(0.8, 0.4), (0.5, 0.5), (0.2, 0.3), (0.45, 0.0), (0.8, 0.15), (0.8, 0.4), (0.6, 1.0)]],
];

const FASHION: [&[(f64, f64)]; 10] = [
    &[(0.3, 0.0), (0.7, 0.0), (1.0, 0.25), (0.85, 0.4), (0.75, 0.3), (0.75, 1.0), (0.25, 1.0), (0.25, 0.3), (0.15, 0.4), (0.0, 0.25)],
    &[(0.25, 0.0), (0.75, 0.0), (0.8, 1.0), (0.58, 1.0), (0.5, 0.3), (0.42, 1.0), (0.2, 1.0)],
    &[(0.3, 0.0), (0.7, 0.0), (0.95, 0.2), (1.0, 0.9), (0.8, 0.9), (0.75, 0.35), (0.75, 1.0), (0.25, 1.0), (0.25, 0.35), (0.2, 0.9), (0.0, 0.9), (0.05, 0.2)],
    &[(0.35, 0.0), (0.65, 0.0), (0.6, 0.35), (0.9, 1.0), (0.1, 1.0), (0.4, 0.35)],
    &[(0.3, 0.0), (0.7, 0.0), (0.95, 0.15), (1.0, 1.0), (0.8, 1.0), (0.78, 0.4), (0.75, 1.0), (0.25, 1.0), (0.22, 0.4), (0.2, 1.0), (0.0, 1.0), (0.05, 0.15)],
    &[(0.0, 0.7), (0.3, 0.5), (0.5, 0.7), (0.7, 0.5), (1.0, 0.75), (1.0, 0.9), (0.0, 0.9)],
    &[(0.3, 0.0), (0.7, 0.0), (1.0, 0.3), (0.9, 0.45), (0.78, 0.35), (0.78, 1.0), (0.22, 1.0), (0.22, 0.35), (0.1, 0.45), (0.0, 0.3)],
    &[(0.0, 0.55), (0.35, 0.5), (0.55, 0.65), (0.95, 0.7), (1.0, 0.9), (0.0, 0.9)],
    &[(0.1, 0.3), (0.3, 0.3), (0.35, 0.05), (0.65, 0.05), (0.7, 0.3), (0.9, 0.3), (0.95, 1.0), (0.05, 1.0)],
    &[(0.3, 0.0), (0.6, 0.0), (0.6, 0.6), (1.0, 0.75), (1.0, 1.0), (0.3, 1.0)],
];

fn seg_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

fn inside(p: (f64, f64), poly: &[(f64, f64)]) -> bool {
    let mut hit = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a.1 > p.1) != (b.1 > p.1) && p.0 < (b.0 - a.0) * (p.1 - a.1) / (b.1 - a.1) + a.0 {
            hit = !hit;
        }
        j = i;
    }
    hit
}

/// Deterministic procedural 28×28 glyph and 32×32 background generator.
/// Item `id` of split `split` depends only on `(master_seed, split, id)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Procedural {
    pub family: GlyphFamily,
    pub master_seed: u64,
}

pub const GLYPH: usize = 28;

impl Procedural {
    fn rng(&self, split: u64, id: usize, salt: u64) -> crate::rng::Rng {
        derive_rng(SeedSpec::new(
            self.master_seed,
            streams::SYNTHETIC_SPRITES + (salt << 40) + (split << 32) + id as u64,
        ))
    }

    pub fn sprite(&self, split: u64, id: usize) -> Sprite {
        let mut rng = self.rng(split, id, 0);
        let class = id % 10;
        let scale = rng.gen_range(16.0..21.0);
        let (rot, shear): (f64, f64) = (rng.gen_range(-0.2..0.2), rng.gen_range(-0.25..0.25));
        let (ox, oy) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
        let thickness: f64 = rng.gen_range(1.4..2.6);
        let peak: f64 = rng.gen_range(0.8..1.0);
        let (cs, sn) = (rot.cos(), rot.sin());
        let warp = |(u, v): (f64, f64)| {
            let (u, v) = (u - 0.5 + shear * (v - 0.5), v - 0.5);
            let (u, v) = (cs * u - sn * v, sn * u + cs * v);
            (14.0 + ox + scale * u, 14.0 + oy + scale * v)
        };
        let mut data = vec![0.0f32; GLYPH * GLYPH];
        match self.family {
            GlyphFamily::Digits => {
                let strokes: Vec<Vec<(f64, f64)>> =
                    DIGITS[class].iter().map(|s| s.iter().map(|&p| warp(p)).collect()).collect();
                for (i, px) in data.iter_mut().enumerate() {
                    let p = ((i % GLYPH) as f64 + 0.5, (i / GLYPH) as f64 + 0.5);
                    let d = strokes
                        .iter()
                        .flat_map(|s| s.windows(2).map(move |w| seg_dist(p, w[0], w[1])))
                        .fold(f64::INFINITY, f64::min);
                    *px = (peak * (thickness / 2.0 + 0.5 - d).clamp(0.0, 1.0)) as f32;
                }
            }
            GlyphFamily::Fashion => {
                let poly: Vec<(f64, f64)> = FASHION[class].iter().map(|&p| warp(p)).collect();
                let texture: f64 = rng.gen_range(0.0..0.3);
                let freq: f64 = rng.gen_range(0.3..1.2);
                for (i, px) in data.iter_mut().enumerate() {
                    let (x, y) = ((i % GLYPH) as f64, (i / GLYPH) as f64);
                    let mut cover = 0.0;
                    for sy in 0..4 {
                        for sx in 0..4 {
                            if inside((x + (sx as f64 + 0.5) / 4.0, y + (sy as f64 + 0.5) / 4.0), &poly) {
                                cover += 1.0 / 16.0;
                            }
                        }
                    }
                    let shade = peak * (1.0 - texture * (0.5 + 0.5 * (freq * (x + y)).sin()));
                    *px = (cover * shade) as f32;
                }
            }
        }
        Sprite::new(GLYPH, GLYPH, data)
    }

    /// Smooth random colour field, 3×32×32.
    pub fn background(&self, split: u64, id: usize) -> Image {
        let mut rng = self.rng(split, id, 1);
        let mut data = Vec::with_capacity(3 * 32 * 32);
        for _ in 0..3 {
            let base: f64 = rng.gen_range(0.2..0.8);
            let waves: Vec<(f64, f64, f64, f64)> = (0..3)
                .map(|_| {
                    (rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4), rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.05..0.2))
                })
                .collect();
            for y in 0..32 {
                for x in 0..32 {
                    let v: f64 = base
                        + waves.iter().map(|&(fx, fy, ph, a)| a * (fx * x as f64 + fy * y as f64 + ph).cos()).sum::<f64>();
                    data.push(v.clamp(0.0, 1.0) as f32);
                }
            }
        }
        Image { channels: 3, height: 32, width: 32, data }
    }
}

/// Standard file names below a data root.
pub fn idx_path(root: &Path, family: GlyphFamily, test: bool) -> PathBuf {
    let dir = match family {
        GlyphFamily::Digits => "mnist",
        GlyphFamily::Fashion => "fashion_mnist",
    };
    root.join(dir).join(if test { "t10k-images-idx3-ubyte" } else { "train-images-idx3-ubyte" })
}

pub fn cifar_paths(root: &Path, test: bool) -> Vec<PathBuf> {
    let dir = root.join("cifar-10-batches-bin");
    if test {
        vec![dir.join("test_batch.bin")]
    } else {
        (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect()
    }
}
