//! Image-space augmentation applied jointly to images, 2D ground truth and
//! cameras.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::limits::mirror_pose;
use super::{quantize, render, GroundTruthSample, HandTruth, SceneSample};
use crate::geom::{self, Mat3, Vec3};
use crate::hand_model::rotation::{rodrigues, rotation_log};
use crate::hand_model::HandPair;
use crate::numerics::FeatureGrid;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationSpec {
    /// In-plane rotation about the image centre, degrees.
    pub rotation_deg: [f64; 2],
    pub scale: [f64; 2],
    /// Per-axis shift in pixels.
    pub translation_px: [f64; 2],
    pub flip_prob: f64,
    /// Motion-blur line length in pixels; lengths up to 1 mean no blur.
    pub blur_len: [usize; 2],
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec {
            rotation_deg: [-20.0, 20.0],
            scale: [0.9, 1.1],
            translation_px: [-3.0, 3.0],
            flip_prob: 0.5,
            blur_len: [1, 5],
        }
    }
}

impl AugmentationSpec {
    pub fn identity() -> Self {
        AugmentationSpec {
            rotation_deg: [0.0, 0.0],
            scale: [1.0, 1.0],
            translation_px: [0.0, 0.0],
            flip_prob: 0.0,
            blur_len: [1, 1],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !ordered(self.rotation_deg) {
            return Err(Error::config("augment.rotation_deg", "need finite lo <= hi"));
        }
        if !ordered(self.scale) || self.scale[0] <= 0.0 {
            return Err(Error::config("augment.scale", "need 0 < lo <= hi"));
        }
        if !ordered(self.translation_px) {
            return Err(Error::config("augment.translation_px", "need finite lo <= hi"));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::config("augment.flip_prob", "must lie in [0, 1]"));
        }
        if self.blur_len[0] > self.blur_len[1] {
            return Err(Error::config("augment.blur_len", "need lo <= hi"));
        }
        Ok(())
    }
}

/// `(cos, sin)`, exact at multiples of 90 degrees.
fn cos_sin(deg: f64) -> (f64, f64) {
    if deg % 90.0 == 0.0 {
        match (deg / 90.0).rem_euclid(4.0) as i64 {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        let (s, c) = deg.to_radians().sin_cos();
        (c, s)
    }
}

fn for_hands(t: &mut GroundTruthSample, mut f: impl FnMut(&mut HandTruth)) {
    f(&mut t.left);
    f(&mut t.right);
}

/// Rotates the scene about the camera axis so that pixels turn by `deg`
/// about the image centre `c`.
pub(crate) fn rotate_truth(t: &mut GroundTruthSample, deg: f64, c: f64) {
    let (co, si) = cos_sin(deg);
    let rz: Mat3 = [[co, -si, 0.0], [si, co, 0.0], [0.0, 0.0, 1.0]];
    let rot = |p: Vec3| geom::mat_vec(&rz, p);
    for_hands(t, |h| {
        h.joints.iter_mut().for_each(|p| *p = rot(*p));
        h.vertices.iter_mut().for_each(|p| *p = rot(*p));
        let root = geom::mat_mul(&rz, &rodrigues([h.pose[0], h.pose[1], h.pose[2]]));
        h.pose[..3].copy_from_slice(&rotation_log(&root));
        let (x, y) = (h.camera.tx - c, h.camera.ty - c);
        h.camera.tx = co * x - si * y + c;
        h.camera.ty = si * x + co * y + c;
    });
    t.offset = rot(t.offset);
}

pub(crate) fn scale_truth(t: &mut GroundTruthSample, k: f64, c: f64) {
    for_hands(t, |h| {
        h.camera.s *= k;
        h.camera.tx = k * (h.camera.tx - c) + c;
        h.camera.ty = k * (h.camera.ty - c) + c;
    });
}

pub(crate) fn translate_truth(t: &mut GroundTruthSample, d: [f64; 2]) {
    for_hands(t, |h| {
        h.camera.tx += d[0];
        h.camera.ty += d[1];
    });
}

/// Mirrors `u -> width - u`: negates x, swaps the hands and re-anchors the
/// new right wrist at the origin.
pub(crate) fn flip_truth(t: &mut GroundTruthSample, width: f64) {
    let m = |p: Vec3| [-p[0], p[1], p[2]];
    let shift = m(t.offset);
    for_hands(t, |h| {
        h.joints.iter_mut().for_each(|p| *p = geom::sub(m(*p), shift));
        h.vertices.iter_mut().for_each(|p| *p = geom::sub(m(*p), shift));
        h.pose = mirror_pose(&h.pose);
        h.camera.tx = width - h.camera.tx + h.camera.s * shift[0];
        h.camera.ty += h.camera.s * shift[1];
    });
    std::mem::swap(&mut t.left, &mut t.right);
    t.offset = [-shift[0], -shift[1], -shift[2]];
}

/// Mirrors columns and swaps the first two channels when `swap`.
fn mirror_grid(g: &FeatureGrid, swap: bool) -> FeatureGrid {
    let mut out = g.clone();
    for c in 0..g.channels {
        let src = if swap && c < 2 { 1 - c } else { c };
        for y in 0..g.height {
            for x in 0..g.width {
                *out.at_mut(c, y, x) = g.at(src, y, g.width - 1 - x);
            }
        }
    }
    out
}

/// Averages each pixel along a line of `len` samples at angle `phi`,
/// clamping at the border.
pub(crate) fn motion_blur(g: &FeatureGrid, len: usize, phi: f64) -> FeatureGrid {
    if len <= 1 {
        return g.clone();
    }
    let (s, c) = phi.sin_cos();
    let half = (len as f64 - 1.0) / 2.0;
    let taps: Vec<(isize, isize)> = (0..len)
        .map(|i| {
            let r = i as f64 - half;
            ((r * c).round() as isize, (r * s).round() as isize)
        })
        .collect();
    let mut out = g.clone();
    let (h, w) = (g.height as isize, g.width as isize);
    for ch in 0..g.channels {
        for y in 0..h {
            for x in 0..w {
                let sum: f64 = taps
                    .iter()
                    .map(|(dx, dy)| g.at(ch, (y + dy).clamp(0, h - 1) as usize, (x + dx).clamp(0, w - 1) as usize))
                    .sum();
                *out.at_mut(ch, y as usize, x as usize) = quantize(sum / len as f64);
            }
        }
    }
    out
}

/// Applies a random draw from `spec`. Geometric changes re-render the
/// scene, so masks always match the transformed meshes; a lone flip
/// mirrors the maps directly. Blur touches the image only.
pub fn augment(pair: &HandPair, sample: &SceneSample, spec: &AugmentationSpec, seed: u64) -> Result<SceneSample> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = rng.gen_range(spec.rotation_deg[0]..=spec.rotation_deg[1]);
    let k = rng.gen_range(spec.scale[0]..=spec.scale[1]);
    let d = [
        rng.gen_range(spec.translation_px[0]..=spec.translation_px[1]),
        rng.gen_range(spec.translation_px[0]..=spec.translation_px[1]),
    ];
    let flip = rng.gen::<f64>() < spec.flip_prob;
    let blur = rng.gen_range(spec.blur_len[0]..=spec.blur_len[1]);
    let phi = rng.gen_range(0.0..std::f64::consts::PI);

    let size = sample.image_size();
    let c = size as f64 / 2.0;
    let mut out = sample.clone();
    let geometric = angle != 0.0 || k != 1.0 || d != [0.0, 0.0];
    if angle != 0.0 {
        rotate_truth(&mut out.truth, angle, c);
    }
    if k != 1.0 {
        scale_truth(&mut out.truth, k, c);
    }
    if d != [0.0, 0.0] {
        translate_truth(&mut out.truth, d);
    }
    if flip {
        flip_truth(&mut out.truth, size as f64);
    }
    if geometric {
        let (image, seg, corr) = render(pair, &out.truth, size);
        out.image = image;
        out.truth.seg = seg;
        out.truth.corr = corr;
    } else if flip {
        out.image = mirror_grid(&sample.image, true);
        out.truth.seg = mirror_grid(&sample.truth.seg, true);
        out.truth.corr = mirror_grid(&sample.truth.corr, false);
    }
    out.image = motion_blur(&out.image, blur, phi);
    Ok(out)
}
