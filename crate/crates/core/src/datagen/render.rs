//! Compositing sprites along trajectories into frames.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::types::{FrameSpec, Role, VideoBatch};

use super::sprites::{Image, Sprite};
use super::trajectory::TrajectorySpec;

/// Renders one clip of `trajectories[0].positions.len()` frames. Sprite `i` moves
/// along trajectory `i`. Overlapping sprites combine by per-pixel maximum; over a
/// background the sprite layer is blended as white with its intensity as alpha.
/// Frames are quantized to 8-bit levels so that stored and generated data agree.
pub fn render_sequence(
    sprites: &[Sprite],
    trajectories: &[TrajectorySpec],
    background: Option<&Image>,
    frame_spec: FrameSpec,
    num_frames: usize,
) -> Result<VideoBatch> {
    frame_spec.validate()?;
    let FrameSpec { channels: c, height: h, width: w } = frame_spec;
    if sprites.len() != trajectories.len() {
        return Err(Error::contract(format!("{} sprites for {} trajectories", sprites.len(), trajectories.len())));
    }
    if let Some(t) = trajectories.iter().find(|t| t.positions.len() != num_frames) {
        return Err(Error::contract(format!("trajectory has {} positions, expected {num_frames}", t.positions.len())));
    }
    if let Some(bg) = background {
        if (bg.channels, bg.height, bg.width) != (c, h, w) {
            return Err(Error::contract(format!(
                "background {}×{}×{} does not match frame {c}×{h}×{w}",
                bg.channels, bg.height, bg.width
            )));
        }
    }
    let mut out = Tensor::<f32>::zeros(vec![1, num_frames, c, h, w]);
    let mut layer = vec![0.0f32; h * w];
    for t in 0..num_frames {
        layer.iter_mut().for_each(|v| *v = 0.0);
        for (sprite, traj) in sprites.iter().zip(trajectories) {
            let (x, y) = traj.positions[t];
            let (px, py) = (x.round(), y.round());
            if px < 0.0 || py < 0.0 || px as usize + sprite.width > w || py as usize + sprite.height > h {
                return Err(Error::Geometry(format!(
                    "sprite at ({px}, {py}) leaves the {h}×{w} canvas at frame {t}"
                )));
            }
            let (px, py) = (px as usize, py as usize);
            for sy in 0..sprite.height {
                let row = &mut layer[(py + sy) * w + px..(py + sy) * w + px + sprite.width];
                for (dst, &src) in row.iter_mut().zip(&sprite.data[sy * sprite.width..(sy + 1) * sprite.width]) {
                    *dst = dst.max(src);
                }
            }
        }
        let frame = &mut out.data_mut()[t * c * h * w..(t + 1) * c * h * w];
        for ch in 0..c {
            for (i, &a) in layer.iter().enumerate() {
                let v = match background {
                    Some(bg) => a + (1.0 - a) * bg.data[ch * h * w + i],
                    None => a,
                };
                frame[ch * h * w + i] = quantize(v);
            }
        }
    }
    VideoBatch::new(out, frame_spec, Role::Target)
}

/// Nearest 8-bit level.
pub fn quantize(v: f32) -> f32 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}
