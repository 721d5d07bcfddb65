//! Procedural parametric two-hand model.
//!
//! A template is a box palm with five tapered tubes. Posing uses linear
//! blend skinning over 16 joints driven by axis-angle rotations; 10 shape
//! directions scale bone lengths, palm dimensions and finger thickness.
//! Joints are reported in the 21-joint convention: the wrist followed by
//! base, middle, distal and tip for thumb, index, middle, ring and pinky.

mod lbs;
mod obj;
pub mod rotation;
mod template;

pub use lbs::lbs_forward;
pub use obj::{read_obj, save_obj, write_obj};
pub use template::{
    build_template, check_closed_oriented, HandTemplate, DEFAULT_VERTEX_BUDGET, MIN_VERTEX_BUDGET,
};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::camera::WeakPerspective;
use crate::geom::{self, Vec3};
use crate::{Error, Result};

/// Skinned joints per hand.
pub const NUM_SKINNED: usize = 16;
/// Reported joints per hand.
pub const NUM_JOINTS: usize = 21;
pub const NUM_SHAPE: usize = 10;
pub const NUM_FINGERS: usize = 5;
pub const POSE_DIM: usize = 3 * NUM_SKINNED;
/// Pose plus shape coefficients regressed per hand.
pub const THETA_DIM: usize = POSE_DIM + NUM_SHAPE;
/// Reported index of the middle-finger base joint.
pub const MIDDLE_BASE: usize = 9;

/// Parent of each reported joint in the 21-joint skeleton (wrist has none).
pub const BONES_21: [(usize, usize); 20] = {
    let mut out = [(0, 0); 20];
    let mut f = 0;
    while f < NUM_FINGERS {
        let base = 1 + 4 * f;
        out[4 * f] = (0, base);
        out[4 * f + 1] = (base, base + 1);
        out[4 * f + 2] = (base + 1, base + 2);
        out[4 * f + 3] = (base + 2, base + 3);
        f += 1;
    }
    out
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Left,
    Right,
}

impl Handedness {
    pub fn other(self) -> Self {
        match self {
            Handedness::Left => Handedness::Right,
            Handedness::Right => Handedness::Left,
        }
    }
}

/// Left and right templates built from one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct HandPair {
    pub left: Arc<HandTemplate>,
    pub right: Arc<HandTemplate>,
}

impl HandPair {
    pub fn build(seed: u64, vertex_budget: usize) -> Result<Self> {
        let right = build_template(seed, vertex_budget)?;
        Ok(HandPair {
            left: Arc::new(right.mirrored()),
            right: Arc::new(right),
        })
    }

    pub fn get(&self, h: Handedness) -> &Arc<HandTemplate> {
        match h {
            Handedness::Left => &self.left,
            Handedness::Right => &self.right,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandParams {
    /// Per skinned joint axis-angle, index 0 is the global rotation.
    pub pose: Vec<Vec3>,
    pub shape: Vec<f64>,
    pub camera: WeakPerspective,
}

impl HandParams {
    pub fn rest(camera: WeakPerspective) -> Self {
        HandParams {
            pose: vec![[0.0; 3]; NUM_SKINNED],
            shape: vec![0.0; NUM_SHAPE],
            camera,
        }
    }

    /// Pose followed by shape, as the network regresses it.
    pub fn theta(&self) -> Vec<f64> {
        self.pose.iter().flatten().chain(&self.shape).copied().collect()
    }

    pub fn from_theta(theta: &[f64], camera: WeakPerspective) -> Result<Self> {
        if theta.len() != THETA_DIM {
            return Err(Error::shape("HandParams::from_theta", format!("expected {THETA_DIM}, got {}", theta.len())));
        }
        Ok(HandParams {
            pose: theta[..POSE_DIM].chunks(3).map(|c| [c[0], c[1], c[2]]).collect(),
            shape: theta[POSE_DIM..].to_vec(),
            camera,
        })
    }

    /// The same articulation expressed for a hand of the other side.
    pub fn mirrored_pose(&self) -> Vec<Vec3> {
        self.pose.iter().map(|p| [p[0], -p[1], -p[2]]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandMesh {
    pub vertices: Vec<Vec3>,
    pub joints: Vec<Vec3>,
    pub faces: Arc<Vec<[usize; 3]>>,
}

impl HandMesh {
    pub fn translated(&self, t: Vec3) -> HandMesh {
        HandMesh {
            vertices: self.vertices.iter().map(|v| geom::add(*v, t)).collect(),
            joints: self.joints.iter().map(|v| geom::add(*v, t)).collect(),
            faces: Arc::clone(&self.faces),
        }
    }

    pub fn root(&self) -> Vec3 {
        self.joints[0]
    }
}

/// Reads the 21 reported joints off a mesh built from `template`.
pub fn joints_21(template: &HandTemplate, mesh: &HandMesh) -> Vec<Vec3> {
    template.joints_21(&mesh.vertices)
}

/// Both hands in one frame: the right wrist at the origin, the left wrist
/// at `offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoHandState {
    pub left: HandMesh,
    pub right: HandMesh,
    pub offset: Vec3,
}

impl TwoHandState {
    pub fn left_root_minus_right_root(&self) -> Vec3 {
        geom::sub(self.left.root(), self.right.root())
    }
}

pub fn compose_two_hands(left: &HandMesh, right: &HandMesh, offset: Vec3) -> Result<TwoHandState> {
    if offset.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("two-hand offset".into()));
    }
    let right = right.translated(geom::scale(right.root(), -1.0));
    let left = left.translated(geom::sub(offset, left.root()));
    Ok(TwoHandState {
        left,
        right,
        offset,
    })
}
