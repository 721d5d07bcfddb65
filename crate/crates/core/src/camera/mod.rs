//! Weak-perspective cameras and the projections between joints and maps.
//!
//! Two coordinate systems meet here. Cameras map meters to image pixels.
//! Feature maps index cells whose centres sit at integer positions, so an
//! image pixel `u` lands at `u · W_map / W_image - 0.5` on a map of width
//! `W_map` (see [`image_to_grid`]).
//!
//! Reading joint features off a map ([`sample_joint_features`]) and writing
//! them back ([`multi_plane_project`]) use the same bilinear kernel, so for
//! joints inside the map the two are exact adjoints.

mod bilinear;
mod ops;

pub use bilinear::{corners, Corner};

use serde::{Deserialize, Serialize};

use crate::geom::Vec3;
use crate::hand_model::Handedness;
use crate::numerics::{ops::linear, FeatureGrid, Matrix, Tensor};
use crate::{Error, Result};

/// Largest side of a projected joint-plane map.
pub const MAX_PLANE_SIDE: usize = 32;

/// `u = s·x + tx`, `v = s·y + ty`, with `s` in pixels per meter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakPerspective {
    pub s: f64,
    pub tx: f64,
    pub ty: f64,
}

impl WeakPerspective {
    pub fn new(s: f64, tx: f64, ty: f64) -> Result<Self> {
        if !(s.is_finite() && tx.is_finite() && ty.is_finite()) {
            return Err(Error::NonFinite("camera".into()));
        }
        if s <= 0.0 {
            return Err(Error::InvalidInput(format!("camera scale must be positive, got {s}")));
        }
        Ok(WeakPerspective { s, tx, ty })
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.s, self.tx, self.ty]
    }

    pub fn project_point(&self, p: Vec3) -> [f64; 2] {
        [self.s * p[0] + self.tx, self.s * p[1] + self.ty]
    }
}

pub fn project(coords3d: &[Vec3], cam: &WeakPerspective) -> Vec<[f64; 2]> {
    coords3d.iter().map(|p| cam.project_point(*p)).collect()
}

/// Image pixel coordinates to cell coordinates of a map with the given side.
pub fn image_to_grid(p: [f64; 2], image_size: usize, grid_size: usize) -> [f64; 2] {
    let r = grid_size as f64 / image_size as f64;
    [p[0] * r - 0.5, p[1] * r - 0.5]
}

/// Per-joint features, their 3D joints and the 2D projection they were
/// read at.
#[derive(Debug, Clone, PartialEq)]
pub struct JointFeatureSet {
    /// `C × J`
    pub features: Matrix,
    pub coords3d: Vec<Vec3>,
    pub coords2d: Vec<[f64; 2]>,
    pub hand: Handedness,
}

/// Bilinear read of every joint. Coordinates are in map cells and are
/// clamped to the border. Returns `C × J`.
pub fn sample_joint_features(fmap: &FeatureGrid, coords2d: &[[f64; 2]]) -> Matrix {
    let (c, h, w) = (fmap.channels, fmap.height, fmap.width);
    let j = coords2d.len();
    let mut out = vec![0.0; c * j];
    for (ji, p) in coords2d.iter().enumerate() {
        for k in corners(*p, h, w, true) {
            for ch in 0..c {
                out[ch * j + ji] += k.w * fmap.data[ch * h * w + k.idx];
            }
        }
    }
    Matrix { rows: c, cols: j, data: out }
}

/// Bilinear write of one feature vector per joint into its own `C`-channel
/// plane; left joints first, then right. Only the in-bounds part of an
/// off-map joint's kernel is written.
pub fn multi_plane_project(
    left: &JointFeatureSet,
    right: &JointFeatureSet,
    height: usize,
    width: usize,
) -> Result<FeatureGrid> {
    check_plane_size(height, width)?;
    if left.features.rows != right.features.rows {
        return Err(Error::shape("multi_plane_project", "hands disagree on channel width"));
    }
    let c = left.features.rows;
    let total = left.coords2d.len() + right.coords2d.len();
    let mut grid = FeatureGrid::zeros(total * c, height, width);
    let plane = height * width;
    let mut j = 0;
    for set in [left, right] {
        if set.features.cols != set.coords2d.len() {
            return Err(Error::shape("multi_plane_project", "features and coordinates disagree"));
        }
        for (ji, p) in set.coords2d.iter().enumerate() {
            for k in corners(*p, height, width, false) {
                for ch in 0..c {
                    grid.data[(j * c + ch) * plane + k.idx] += k.w * set.features.at(ch, ji);
                }
            }
            j += 1;
        }
    }
    Ok(grid)
}

/// Learned affine embedding of 3D joints: `weight` is `C × 3`, result `C × J`.
pub fn encode_coords(coords3d: &[Vec3], weight: &Matrix, bias: &[f64]) -> Result<Matrix> {
    if weight.cols != 3 || bias.len() != weight.rows {
        return Err(Error::shape("encode_coords", "weight must be C×3 with a C-long bias"));
    }
    let x = Tensor::new([coords3d.len(), 3], coords3d.iter().flatten().copied().collect())?;
    let wt = Tensor::from_fn([3, weight.rows], |i| weight.at(i % weight.rows, i / weight.rows));
    let rows = linear(&x, &wt, bias)?;
    let (j, c) = (coords3d.len(), weight.rows);
    let mut data = vec![0.0; c * j];
    for ji in 0..j {
        for ch in 0..c {
            data[ch * j + ji] = rows.data()[ji * c + ch];
        }
    }
    Ok(Matrix { rows: c, cols: j, data })
}

pub(crate) fn check_plane_size(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 || height > MAX_PLANE_SIDE || width > MAX_PLANE_SIDE {
        return Err(Error::InvalidInput(format!(
            "projected planes must be between 1 and {MAX_PLANE_SIDE} cells a side, got {height}x{width}"
        )));
    }
    Ok(())
}
