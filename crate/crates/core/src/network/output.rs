//! Plain-value view of a forward pass.

use crate::camera::WeakPerspective;
use crate::geom::{self, Vec3};
use crate::hand_model::{HandMesh, HandPair, HandParams, Handedness, TwoHandState};
use crate::metrics::{HandRecord, SampleRecord};
use crate::numerics::{FeatureGrid, Tape, Tensor};
use crate::Result;

use super::{ForwardVars, HandVars};

#[derive(Debug, Clone, PartialEq)]
pub struct HandOutput {
    /// Camera here maps root-relative coordinates to pixels.
    pub params: HandParams,
    pub vertices: Vec<Vec3>,
    pub joints: Vec<Vec3>,
    pub vertices_2d: Vec<[f64; 2]>,
    pub joints_2d: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutput {
    pub left: HandOutput,
    pub right: HandOutput,
    pub offset: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    /// Initial estimate followed by one entry per refinement stage.
    pub stages: Vec<StageOutput>,
    pub seg: FeatureGrid,
    pub corr: FeatureGrid,
}

fn points3(t: &Tensor) -> Vec<Vec3> {
    t.data().chunks(3).map(|c| [c[0], c[1], c[2]]).collect()
}

fn points2(t: &Tensor) -> Vec<[f64; 2]> {
    t.data().chunks(2).map(|c| [c[0], c[1]]).collect()
}

impl HandOutput {
    fn read(tape: &Tape, v: &HandVars) -> Result<Self> {
        let c = tape.value(v.camera).data();
        Ok(HandOutput {
            params: HandParams::from_theta(tape.value(v.theta).data(), WeakPerspective::new(c[0], c[1], c[2])?)?,
            vertices: points3(tape.value(v.vertices)),
            joints: points3(tape.value(v.joints)),
            vertices_2d: points2(tape.value(v.vertices_2d)),
            joints_2d: points2(tape.value(v.joints_2d)),
        })
    }
}

impl StageOutput {
    pub fn hand(&self, h: Handedness) -> &HandOutput {
        match h {
            Handedness::Left => &self.left,
            Handedness::Right => &self.right,
        }
    }

    /// Both hands in the two-hand frame: right wrist at the origin, left
    /// wrist at the offset.
    pub fn state(&self, pair: &HandPair) -> TwoHandState {
        let mesh = |o: &HandOutput, h: Handedness, shift: Vec3| HandMesh {
            vertices: o.vertices.iter().map(|p| geom::add(*p, shift)).collect(),
            joints: o.joints.iter().map(|p| geom::add(*p, shift)).collect(),
            faces: pair.get(h).faces().clone(),
        };
        TwoHandState {
            left: mesh(&self.left, Handedness::Left, self.offset),
            right: mesh(&self.right, Handedness::Right, [0.0; 3]),
            offset: self.offset,
        }
    }

    /// Exchange record; cameras are re-expressed for the two-hand frame.
    pub fn to_record(&self, id: impl Into<String>, pair: &HandPair) -> SampleRecord {
        let s = self.state(pair);
        let cam = |o: &HandOutput, shift: Vec3| {
            let c = o.params.camera;
            [c.s, c.tx - c.s * shift[0], c.ty - c.s * shift[1]]
        };
        SampleRecord {
            id: id.into(),
            left: HandRecord {
                joints: s.left.joints,
                vertices: s.left.vertices,
                camera: cam(&self.left, self.offset),
            },
            right: HandRecord {
                joints: s.right.joints,
                vertices: s.right.vertices,
                camera: cam(&self.right, [0.0; 3]),
            },
            offset: self.offset,
        }
    }

    /// Projected vertices of both hands, left first.
    pub fn vertices_2d(&self) -> Vec<[f64; 2]> {
        self.left.vertices_2d.iter().chain(&self.right.vertices_2d).copied().collect()
    }
}

impl ModelOutput {
    pub fn read(tape: &Tape, vars: &ForwardVars) -> Result<Self> {
        let stages = vars
            .stages
            .iter()
            .map(|s| {
                Ok(StageOutput {
                    left: HandOutput::read(tape, &s.left)?,
                    right: HandOutput::read(tape, &s.right)?,
                    offset: {
                        let o = tape.value(s.offset).data();
                        [o[0], o[1], o[2]]
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelOutput {
            stages,
            seg: FeatureGrid::from_tensor(tape.value(vars.seg))?,
            corr: FeatureGrid::from_tensor(tape.value(vars.corr))?,
        })
    }

    pub fn last(&self) -> &StageOutput {
        self.stages.last().expect("at least the initial estimate")
    }
}
