//! Synthetic two-hand scenes: random posed hands, an orthographic render
//! and the matching ground truth.
//!
//! Image channels are the left mask, the right mask and inverse depth
//! relative to the nearest vertex, `D / (z - z_min + D)`, with background 0.
//! Ground-truth maps are a 2-channel segmentation and a 3-channel dense
//! correspondence holding canonical template coordinates scaled to `[0, 1]`.
//! Left-hand vertices use the coordinates of their mirror partner, so the
//! correspondence of a point is unchanged by a horizontal flip.
//!
//! All map values are multiples of `1/65535`, which makes the 16-bit
//! dataset blobs lossless.

mod augment;
mod dataset;
mod limits;
mod raster;

pub use augment::{augment, AugmentationSpec};
pub use dataset::{load_dataset, save_dataset, DatasetManifest};
pub use limits::PoseLimits;
pub use raster::{rasterize, Fragments, RasterMesh};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::camera::{project, WeakPerspective};
use crate::geom::{self, Vec3};
use crate::hand_model::{lbs_forward, Handedness, HandMesh, HandPair, HandParams, TwoHandState, NUM_SHAPE};
use crate::metrics::{HandRecord, SampleRecord};
use crate::numerics::FeatureGrid;
use crate::{Error, Result};

/// Distance from the camera to the nearest vertex in the inverse-depth channel.
pub const DEPTH_DISTANCE: f64 = 0.6;
const QUANT: f64 = 65535.0;
const MAX_SCENE_ATTEMPTS: usize = 10;

pub(crate) fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * QUANT).round() / QUANT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub image_size: usize,
    /// Probability that the two projected hand boxes overlap.
    pub overlap: f64,
    /// Shape coefficients are standard normal, clipped to `±shape_clip`.
    pub shape_clip: f64,
    /// Fraction of the image spanned by the larger side of the scene box.
    pub fill: [f64; 2],
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            image_size: 64,
            overlap: 0.5,
            shape_clip: 2.0,
            fill: [0.6, 0.85],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 8 {
            return Err(Error::config("synth.image_size", "must be at least 8"));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(Error::config("synth.overlap", "must lie in [0, 1]"));
        }
        if !(self.shape_clip > 0.0) {
            return Err(Error::config("synth.shape_clip", "must be > 0"));
        }
        if !(self.fill[0] > 0.0 && self.fill[0] <= self.fill[1] && self.fill[1] <= 1.0) {
            return Err(Error::config("synth.fill", "need 0 < lo <= hi <= 1"));
        }
        Ok(())
    }
}

/// Ground truth of one hand. Points are in the two-hand frame (right wrist
/// at the origin) and `camera` maps that frame to pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct HandTruth {
    pub pose: Vec<f64>,
    pub shape: Vec<f64>,
    pub camera: WeakPerspective,
    pub joints: Vec<Vec3>,
    pub vertices: Vec<Vec3>,
}

impl HandTruth {
    pub fn root(&self) -> Vec3 {
        self.joints[0]
    }

    pub fn joints_relative(&self) -> Vec<Vec3> {
        let r = self.root();
        self.joints.iter().map(|p| geom::sub(*p, r)).collect()
    }

    pub fn vertices_relative(&self) -> Vec<Vec3> {
        let r = self.root();
        self.vertices.iter().map(|p| geom::sub(*p, r)).collect()
    }

    pub fn joints_2d(&self) -> Vec<[f64; 2]> {
        project(&self.joints, &self.camera)
    }

    pub fn vertices_2d(&self) -> Vec<[f64; 2]> {
        project(&self.vertices, &self.camera)
    }

    /// The camera expressed for root-relative coordinates.
    pub fn relative_camera(&self) -> WeakPerspective {
        let r = self.root();
        let c = self.camera;
        WeakPerspective {
            s: c.s,
            tx: c.tx + c.s * r[0],
            ty: c.ty + c.s * r[1],
        }
    }

    fn mesh(&self, pair: &HandPair, h: Handedness) -> HandMesh {
        HandMesh {
            vertices: self.vertices.clone(),
            joints: self.joints.clone(),
            faces: pair.get(h).faces().clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthSample {
    pub left: HandTruth,
    pub right: HandTruth,
    /// Left wrist minus right wrist (m).
    pub offset: Vec3,
    /// `[2, H, W]`: left, right.
    pub seg: FeatureGrid,
    /// `[3, H, W]` canonical coordinates.
    pub corr: FeatureGrid,
}

impl GroundTruthSample {
    pub fn hand(&self, h: Handedness) -> &HandTruth {
        match h {
            Handedness::Left => &self.left,
            Handedness::Right => &self.right,
        }
    }

    pub fn state(&self, pair: &HandPair) -> TwoHandState {
        TwoHandState {
            left: self.left.mesh(pair, Handedness::Left),
            right: self.right.mesh(pair, Handedness::Right),
            offset: self.offset,
        }
    }

    pub fn to_record(&self, id: impl Into<String>) -> SampleRecord {
        let hand = |t: &HandTruth| HandRecord {
            joints: t.joints.clone(),
            vertices: t.vertices.clone(),
            camera: t.camera.to_array(),
        };
        SampleRecord {
            id: id.into(),
            left: hand(&self.left),
            right: hand(&self.right),
            offset: self.offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    pub seed: u64,
    /// `[3, H, W]`: left mask, right mask, inverse depth.
    pub image: FeatureGrid,
    pub truth: GroundTruthSample,
}

impl SceneSample {
    pub fn image_size(&self) -> usize {
        self.image.width
    }
}

/// Canonical correspondence coordinates of the right template, scaled to
/// the unit cube.
pub fn canonical_coordinates(pair: &HandPair) -> Vec<Vec3> {
    let v = pair.right.vertices();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in v {
        for c in 0..3 {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }
    v.iter()
        .map(|p| [0, 1, 2].map(|c| (p[c] - lo[c]) / (hi[c] - lo[c])))
        .collect()
}

/// Rendered maps of a ground-truth scene: `(image, seg, corr)`.
pub fn render(pair: &HandPair, truth: &GroundTruthSample, size: usize) -> (FeatureGrid, FeatureGrid, FeatureGrid) {
    let canon = canonical_coordinates(pair);
    let to_pixels = |t: &HandTruth| -> Vec<Vec3> {
        t.vertices
            .iter()
            .map(|p| {
                let [u, v] = t.camera.project_point(*p);
                [u, v, p[2]]
            })
            .collect()
    };
    let pl = to_pixels(&truth.left);
    let pr = to_pixels(&truth.right);
    let meshes = [
        RasterMesh { points: &pl, faces: pair.left.faces(), attributes: &canon },
        RasterMesh { points: &pr, faces: pair.right.faces(), attributes: &canon },
    ];
    let frag = rasterize(&meshes, size, size);
    let z_min = pl.iter().chain(&pr).map(|p| p[2]).fold(f64::INFINITY, f64::min);
    let n = size * size;
    let mut image = FeatureGrid::zeros(3, size, size);
    let mut seg = FeatureGrid::zeros(2, size, size);
    let mut corr = FeatureGrid::zeros(3, size, size);
    for i in 0..n {
        let Some(m) = frag.label[i] else { continue };
        image.data[m * n + i] = 1.0;
        seg.data[m * n + i] = 1.0;
        image.data[2 * n + i] = quantize(DEPTH_DISTANCE / (frag.depth[i] - z_min + DEPTH_DISTANCE));
        for c in 0..3 {
            corr.data[c * n + i] = quantize(frag.attribute[i][c]);
        }
    }
    (image, seg, corr)
}

/// Pose and shape of both hands plus the scene layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub left: (Vec<f64>, Vec<f64>),
    pub right: (Vec<f64>, Vec<f64>),
    pub offset: Vec3,
    pub camera: WeakPerspective,
}

fn relative_mesh(pair: &HandPair, h: Handedness, pose: &[f64], shape: &[f64]) -> Result<HandMesh> {
    let mut theta = pose.to_vec();
    theta.extend_from_slice(shape);
    let p = HandParams::from_theta(&theta, WeakPerspective { s: 1.0, tx: 0.0, ty: 0.0 })?;
    let m = lbs_forward(pair.get(h), &p)?;
    Ok(m.translated(geom::scale(m.root(), -1.0)))
}

/// Builds and renders a scene; both hands share `spec.camera`.
pub fn compose_scene(pair: &HandPair, spec: &SceneSpec, size: usize, seed: u64) -> Result<SceneSample> {
    let l = relative_mesh(pair, Handedness::Left, &spec.left.0, &spec.left.1)?.translated(spec.offset);
    let r = relative_mesh(pair, Handedness::Right, &spec.right.0, &spec.right.1)?;
    let hand = |m: HandMesh, (pose, shape): &(Vec<f64>, Vec<f64>)| HandTruth {
        pose: pose.clone(),
        shape: shape.clone(),
        camera: spec.camera,
        joints: m.joints,
        vertices: m.vertices,
    };
    let mut truth = GroundTruthSample {
        left: hand(l, &spec.left),
        right: hand(r, &spec.right),
        offset: spec.offset,
        seg: FeatureGrid::zeros(2, size, size),
        corr: FeatureGrid::zeros(3, size, size),
    };
    let (image, seg, corr) = render(pair, &truth, size);
    truth.seg = seg;
    truth.corr = corr;
    Ok(SceneSample { seed, image, truth })
}

fn xy_box(points: &[Vec3]) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for p in points {
        b[0] = b[0].min(p[0]);
        b[1] = b[1].min(p[1]);
        b[2] = b[2].max(p[0]);
        b[3] = b[3].max(p[1]);
    }
    b
}

fn boxes_overlap(a: [f64; 4], b: [f64; 4]) -> bool {
    a[0] < b[2] && b[0] < a[2] && a[1] < b[3] && b[1] < a[3]
}

fn sample_offset(rng: &mut ChaCha8Rng, overlap: bool) -> Vec3 {
    let sign = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    if overlap {
        let dz = sign(rng) * rng.gen_range(0.03..0.08);
        [rng.gen_range(-0.07..0.07), rng.gen_range(-0.05..0.05), dz]
    } else {
        let dx = sign(rng) * rng.gen_range(0.13..0.22);
        [dx, rng.gen_range(-0.05..0.05), rng.gen_range(-0.04..0.04)]
    }
}

/// Draws a random scene. Poses come from `limits`; the two projected hand
/// boxes overlap with probability `cfg.overlap`.
pub fn sample_scene(pair: &HandPair, cfg: &SynthConfig, limits: &PoseLimits, seed: u64) -> Result<SceneSample> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = cfg.image_size;
    for _ in 0..MAX_SCENE_ATTEMPTS {
        let mut shape = || -> Vec<f64> {
            (0..NUM_SHAPE)
                .map(|_| rng.sample::<f64, _>(StandardNormal).clamp(-cfg.shape_clip, cfg.shape_clip))
                .collect()
        };
        let shape_l = shape();
        let shape_r = shape();
        let pose_r = limits.sample(&mut rng);
        let pose_l = limits.sample_mirrored(&mut rng);
        let l = relative_mesh(pair, Handedness::Left, &pose_l, &shape_l)?;
        let r = relative_mesh(pair, Handedness::Right, &pose_r, &shape_r)?;
        let want_overlap = rng.gen_bool(cfg.overlap);
        let rb = xy_box(&r.vertices);
        let mut offset = sample_offset(&mut rng, want_overlap);
        for _ in 0..20 {
            let lb = xy_box(&l.translated(offset).vertices);
            if boxes_overlap(lb, rb) == want_overlap {
                break;
            }
            offset = sample_offset(&mut rng, want_overlap);
        }
        let lb = xy_box(&l.translated(offset).vertices);
        let all = [lb[0].min(rb[0]), lb[1].min(rb[1]), lb[2].max(rb[2]), lb[3].max(rb[3])];
        let extent = (all[2] - all[0]).max(all[3] - all[1]);
        let fill = rng.gen_range(cfg.fill[0]..=cfg.fill[1]);
        let s = fill * size as f64 / extent;
        let slack = (1.0 - fill) * 0.5 * size as f64;
        let mut centre = |lo: f64, hi: f64| size as f64 / 2.0 - s * (lo + hi) / 2.0 + rng.gen_range(-slack..=slack);
        let tx = centre(all[0], all[2]);
        let ty = centre(all[1], all[3]);
        let spec = SceneSpec {
            left: (pose_l, shape_l),
            right: (pose_r, shape_r),
            offset,
            camera: WeakPerspective::new(s, tx, ty)?,
        };
        let sample = compose_scene(pair, &spec, size, seed)?;
        let n = size * size;
        let covered = |c: usize| sample.truth.seg.data[c * n..(c + 1) * n].iter().any(|v| *v > 0.0);
        if covered(0) && covered(1) {
            return Ok(sample);
        }
    }
    Err(Error::Data(format!("scene {seed}: a hand stayed off-screen after {MAX_SCENE_ATTEMPTS} attempts")))
}

/// Samples `count` scenes with seeds `base_seed + i`, in parallel.
pub fn generate(pair: &HandPair, cfg: &SynthConfig, limits: &PoseLimits, base_seed: u64, count: usize) -> Result<Vec<SceneSample>> {
    use rayon::prelude::*;
    (0..count as u64)
        .into_par_iter()
        .map(|i| sample_scene(pair, cfg, limits, base_seed.wrapping_add(i)))
        .collect()
}
