//! Error and similarity metrics between predicted and ground-truth clips.

use crate::error::{Error, Result};
use crate::types::VideoBatch;

use super::ssim::ssim_frame;

/// PSNR assigned to a perfect frame when the clip as a whole is not perfect (100 dB).
pub const PERFECT_FRAME_MSE: f64 = 1e-10;

fn check_shapes(pred: &VideoBatch, target: &VideoBatch) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::contract(format!(
            "prediction shape {:?} does not match target shape {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    Ok(())
}

/// Mean squared error as `(frame_pixel_sum, per_pixel)`.
///
/// The first value sums squared error over a frame's `C·H·W` pixels and averages
/// over clips and frames; the second averages over every element.
pub fn mse(pred: &VideoBatch, target: &VideoBatch) -> Result<(f64, f64)> {
    check_shapes(pred, target)?;
    let mut acc = QualityAccumulator::new(pred.spec().pixels());
    acc.add_errors(pred, target);
    Ok((acc.mse_pixel() * pred.spec().pixels() as f64, acc.mse_pixel()))
}

/// Mean absolute error as `(frame_pixel_sum, per_pixel)`.
pub fn mae(pred: &VideoBatch, target: &VideoBatch) -> Result<(f64, f64)> {
    check_shapes(pred, target)?;
    let mut acc = QualityAccumulator::new(pred.spec().pixels());
    acc.add_errors(pred, target);
    Ok((acc.mae_pixel() * pred.spec().pixels() as f64, acc.mae_pixel()))
}

/// `10·log10(max_val² / mse)`; infinite for `mse == 0`.
pub fn psnr_from_mse(mse: f64, max_val: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (max_val * max_val / mse).log10()
    }
}

/// Per-frame PSNR on clamped inputs, averaged over frames and clips.
pub fn psnr(pred: &VideoBatch, target: &VideoBatch) -> Result<f64> {
    check_shapes(pred, target)?;
    let mut acc = QualityAccumulator::new(pred.spec().pixels());
    acc.add(pred, target);
    Ok(acc.psnr())
}

/// Mean SSIM over channels, frames and clips.
pub fn ssim(pred: &VideoBatch, target: &VideoBatch) -> Result<f64> {
    check_shapes(pred, target)?;
    let mut acc = QualityAccumulator::new(pred.spec().pixels());
    acc.add(pred, target);
    Ok(acc.ssim())
}

/// Streaming sufficient statistics for the quality metrics. Partial accumulators
/// over disjoint shards combine with [`QualityAccumulator::merge`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QualityAccumulator {
    pixels_per_frame: usize,
    elements: u64,
    sq_err: f64,
    abs_err: f64,
    frames: u64,
    ssim_sum: f64,
    psnr_sum: f64,
    psnr_frames: u64,
}

impl QualityAccumulator {
    pub fn new(pixels_per_frame: usize) -> Self {
        Self { pixels_per_frame, ..Self::default() }
    }

    fn add_errors(&mut self, pred: &VideoBatch, target: &VideoBatch) {
        for (&p, &t) in pred.data().data().iter().zip(target.data().data()) {
            let d = p as f64 - t as f64;
            self.sq_err += d * d;
            self.abs_err += d.abs();
        }
        self.elements += pred.data().numel() as u64;
    }

    /// Adds every frame of a prediction/target pair.
    pub fn add(&mut self, pred: &VideoBatch, target: &VideoBatch) {
        assert_eq!(pred.shape(), target.shape(), "accumulator shape mismatch");
        self.add_errors(pred, target);
        let fs = pred.spec();
        for b in 0..pred.batch() {
            for t in 0..pred.len() {
                let (p, q) = (pred.frame(b, t), target.frame(b, t));
                self.ssim_sum += ssim_frame(p, q, fs.channels, fs.height, fs.width);
                let mse: f64 = p
                    .iter()
                    .zip(q)
                    .map(|(&x, &y)| {
                        let d = (x as f64).clamp(0.0, 1.0) - (y as f64).clamp(0.0, 1.0);
                        d * d
                    })
                    .sum::<f64>()
                    / p.len() as f64;
                self.psnr_sum += psnr_from_mse(mse.max(PERFECT_FRAME_MSE), 1.0);
                self.psnr_frames += 1;
                self.frames += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &QualityAccumulator) {
        self.elements += other.elements;
        self.sq_err += other.sq_err;
        self.abs_err += other.abs_err;
        self.frames += other.frames;
        self.ssim_sum += other.ssim_sum;
        self.psnr_sum += other.psnr_sum;
        self.psnr_frames += other.psnr_frames;
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn mse_pixel(&self) -> f64 {
        if self.elements == 0 {
            0.0
        } else {
            self.sq_err / self.elements as f64
        }
    }

    pub fn mae_pixel(&self) -> f64 {
        if self.elements == 0 {
            0.0
        } else {
            self.abs_err / self.elements as f64
        }
    }

    pub fn mse_paper(&self) -> f64 {
        self.mse_pixel() * self.pixels_per_frame as f64
    }

    pub fn mae_paper(&self) -> f64 {
        self.mae_pixel() * self.pixels_per_frame as f64
    }

    pub fn ssim(&self) -> f64 {
        if self.frames == 0 {
            1.0
        } else {
            self.ssim_sum / self.frames as f64
        }
    }

    /// Average per-frame PSNR; infinite exactly when the pooled per-pixel error is zero.
    /// Perfect frames inside an imperfect clip count as 100 dB so that a single exact
    /// frame does not make the average infinite.
    pub fn psnr(&self) -> f64 {
        if self.mse_pixel() == 0.0 {
            f64::INFINITY
        } else {
            self.psnr_sum / self.psnr_frames.max(1) as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use crate::types::{FrameSpec, Role};

    fn batch(v: f32) -> VideoBatch {
        VideoBatch::new(Tensor::full(vec![1, 2, 1, 64, 64], v), FrameSpec::mmnist(), Role::Target).unwrap()
    }

    #[test]
    fn zeros_against_half() {
        let (p, t) = (batch(0.0).with_role(Role::Prediction).unwrap(), batch(0.5));
        assert_eq!(mse(&p, &t).unwrap(), (1024.0, 0.25));
        assert_eq!(mae(&p, &t).unwrap(), (2048.0, 0.5));
    }

    #[test]
    fn identical_inputs_are_perfect() {
        let t = batch(0.3);
        assert_eq!(mse(&t, &t).unwrap(), (0.0, 0.0));
        assert_eq!(psnr(&t, &t).unwrap(), f64::INFINITY);
        assert!((ssim(&t, &t).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn psnr_closed_form() {
        assert!((psnr_from_mse(0.01, 1.0) - 20.0).abs() < 1e-12);
    }
}
