//! Per-joint rotation limits for sampling plausible poses.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::hand_model::{NUM_FINGERS, NUM_SKINNED, POSE_DIM};
use crate::{Error, Result};

/// Axis-angle bounds of the right hand, `[joint][axis] = (min, max)` in
/// radians. Flexion is about the local x axis. Left-hand poses are mirrored
/// right-hand samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseLimits {
    pub bounds: Vec<[(f64, f64); 3]>,
}

impl Default for PoseLimits {
    fn default() -> Self {
        Self::anatomical()
    }
}

impl PoseLimits {
    pub fn anatomical() -> Self {
        let mut bounds = vec![[(0.0, 0.0); 3]; NUM_SKINNED];
        bounds[0] = [(-0.6, 0.6), (-0.8, 0.8), (-0.8, 0.8)];
        bounds[1] = [(-0.4, 0.6), (-0.4, 0.4), (-0.5, 0.5)];
        bounds[2] = [(-0.2, 0.8), (-0.1, 0.1), (-0.2, 0.2)];
        bounds[3] = [(-0.2, 1.0), (-0.05, 0.05), (-0.1, 0.1)];
        for f in 1..NUM_FINGERS {
            let j = 1 + 3 * f;
            bounds[j] = [(-0.3, 1.3), (-0.1, 0.1), (-0.3, 0.3)];
            bounds[j + 1] = [(-0.1, 1.5), (-0.05, 0.05), (-0.05, 0.05)];
            bounds[j + 2] = [(-0.1, 1.1), (-0.05, 0.05), (-0.05, 0.05)];
        }
        PoseLimits { bounds }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.len() != NUM_SKINNED {
            return Err(Error::config("limits", format!("need {NUM_SKINNED} joints")));
        }
        for (j, b) in self.bounds.iter().enumerate() {
            if b.iter().any(|(lo, hi)| !(lo <= hi) || lo.abs() > std::f64::consts::PI || hi.abs() > std::f64::consts::PI) {
                return Err(Error::config("limits", format!("joint {j} has an invalid range")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, pose: &[f64]) -> bool {
        pose.len() == POSE_DIM
            && self
                .bounds
                .iter()
                .enumerate()
                .all(|(j, b)| (0..3).all(|a| (b[a].0..=b[a].1).contains(&pose[3 * j + a])))
    }

    /// Uniform on every axis, except finger flexion which follows one
    /// shared curl per finger plus noise, clipped to the range.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut pose = vec![0.0; POSE_DIM];
        let curls: Vec<f64> = (0..NUM_FINGERS).map(|_| rng.gen_range(0.0..1.0)).collect();
        for (j, b) in self.bounds.iter().enumerate() {
            for (a, &(lo, hi)) in b.iter().enumerate() {
                let u: f64 = if j > 0 && a == 0 {
                    let noise: f64 = rng.sample(StandardNormal);
                    (curls[(j - 1) / 3] + 0.15 * noise).clamp(0.0, 1.0)
                } else {
                    rng.gen_range(0.0..=1.0)
                };
                pose[3 * j + a] = lo + u * (hi - lo);
            }
        }
        pose
    }

    /// A right-hand sample mirrored into a left-hand pose.
    pub fn sample_mirrored(&self, rng: &mut impl Rng) -> Vec<f64> {
        mirror_pose(&self.sample(rng))
    }
}

/// Maps a pose between the hands: `(x, y, z) -> (x, -y, -z)` per joint.
pub fn mirror_pose(pose: &[f64]) -> Vec<f64> {
    pose.chunks(3).flat_map(|p| [p[0], -p[1], -p[2]]).collect()
}
