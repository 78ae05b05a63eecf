//! Bouncing-sprite trajectories.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Motion of one sprite over a clip. Positions are the sprite's top-left corner in
/// canvas pixels, before rounding to the pixel grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub sprite_id: usize,
    pub start_position: (f64, f64),
    pub velocity: (f64, f64),
    pub positions: Vec<(f64, f64)>,
}

impl TrajectorySpec {
    /// Positions rounded to the pixel grid.
    pub fn pixel_positions(&self) -> Vec<(usize, usize)> {
        self.positions.iter().map(|&(x, y)| (x.round() as usize, y.round() as usize)).collect()
    }
}

/// One move-then-reflect step on a single axis with valid range `[0, max]`.
/// Returns the new coordinate and velocity.
pub fn reflect_step(pos: f64, vel: f64, max: f64) -> (f64, f64) {
    if max <= 0.0 {
        return (0.0, vel);
    }
    let (mut p, mut v) = (pos + vel, vel);
    loop {
        if p < 0.0 {
            p = -p;
            v = -v;
        } else if p > max {
            p = 2.0 * max - p;
            v = -v;
        } else {
            return (p, v);
        }
    }
}

/// Integrates `num_frames` positions from `start`. With `noise`, every component
/// of the velocity receives Gaussian noise before each step.
pub fn integrate(
    start: (f64, f64),
    velocity: (f64, f64),
    num_frames: usize,
    max: (f64, f64),
    mut noise: Option<(&mut Rng, f64)>,
) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(num_frames);
    let (mut x, mut y) = start;
    let (mut vx, mut vy) = velocity;
    for i in 0..num_frames {
        if i > 0 {
            if let Some((rng, sigma)) = noise.as_mut() {
                let n = Normal::new(0.0, *sigma).expect("finite sigma");
                vx += n.sample(*rng);
                vy += n.sample(*rng);
            }
            (x, vx) = reflect_step(x, vx, max.0);
            (y, vy) = reflect_step(y, vy, max.1);
        }
        out.push((x, y));
    }
    out
}

fn check_fit(canvas: (usize, usize), sprite: (usize, usize)) -> Result<(f64, f64)> {
    let (h, w) = canvas;
    let (sh, sw) = sprite;
    if sh > h || sw > w || sh == 0 || sw == 0 {
        return Err(Error::Geometry(format!("sprite {sh}×{sw} does not fit canvas {h}×{w}")));
    }
    Ok(((w - sw) as f64, (h - sh) as f64))
}

/// Draws a direction uniformly on the circle, a speed uniformly from
/// `speed_range` and a start position uniformly over valid placements, then
/// integrates the reflective dynamics. `canvas` and `sprite` are `(height, width)`.
pub fn sample_trajectory(
    rng: &mut Rng,
    sprite_id: usize,
    num_frames: usize,
    canvas: (usize, usize),
    sprite: (usize, usize),
    speed_range: (f64, f64),
) -> Result<TrajectorySpec> {
    let max = check_fit(canvas, sprite)?;
    if num_frames == 0 {
        return Err(Error::Geometry("a trajectory needs at least one frame".into()));
    }
    let (lo, hi) = speed_range;
    if !(0.0..=f64::MAX).contains(&lo) || hi < lo {
        return Err(Error::config("speed_range", format!("invalid interval [{lo}, {hi}]")));
    }
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let speed = if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let x = if max.0 > 0.0 { rng.gen_range(0.0..=max.0) } else { 0.0 };
    let y = if max.1 > 0.0 { rng.gen_range(0.0..=max.1) } else { 0.0 };
    let velocity = (speed * angle.cos(), speed * angle.sin());
    let positions = integrate((x, y), velocity, num_frames, max, None);
    Ok(TrajectorySpec { sprite_id, start_position: (x, y), velocity, positions })
}

/// Re-integrates a trajectory from its start with velocity noise of std `sigma`.
pub fn perturb_dynamics(
    traj: &TrajectorySpec,
    canvas: (usize, usize),
    sprite: (usize, usize),
    sigma: f64,
    rng: &mut Rng,
) -> Result<TrajectorySpec> {
    let max = check_fit(canvas, sprite)?;
    let positions = integrate(traj.start_position, traj.velocity, traj.positions.len(), max, Some((rng, sigma)));
    Ok(TrajectorySpec { positions, ..traj.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, SeedSpec};

    #[test]
    fn spec_example_path() {
        let p = integrate((30.0, 0.0), (5.0, 0.0), 4, (36.0, 36.0), None);
        let xs: Vec<f64> = p.iter().map(|q| q.0).collect();
        assert_eq!(xs, vec![30.0, 35.0, 32.0, 27.0]);
    }

    #[test]
    fn zero_speed_stays_put() {
        let mut rng = derive_rng(SeedSpec::new(1, 0));
        let t = sample_trajectory(&mut rng, 0, 20, (64, 64), (28, 28), (0.0, 0.0)).unwrap();
        assert_eq!(t.positions.len(), 20);
        assert!(t.positions.iter().all(|&p| p == t.start_position));
    }

    #[test]
    fn oversized_sprite_is_rejected() {
        let mut rng = derive_rng(SeedSpec::new(1, 0));
        assert!(matches!(sample_trajectory(&mut rng, 0, 5, (16, 16), (28, 28), (1.0, 2.0)), Err(Error::Geometry(_))));
    }
}
