//! The full training objective of one sample.

use std::sync::Arc;

use crate::geom::Vec3;
use crate::hand_model::{HandPair, Handedness};
use crate::network::{ForwardVars, StageVars};
use crate::numerics::{Tape, Tensor, Var};
use crate::synth::GroundTruthSample;
use crate::{Error, Result};

use super::{LossReport, LossWeights};

const BETA: f64 = 1.0;

/// Ground truth of one hand in the units the loss compares.
#[derive(Debug, Clone)]
struct HandTargets {
    joints: Tensor,
    vertices: Tensor,
    joints_2d: Tensor,
    vertices_2d: Tensor,
    /// Root-relative vertices in meters for the surface terms.
    mesh: Vec<Vec3>,
    faces: Arc<Vec<[usize; 3]>>,
}

/// Targets of one sample, normalized once and reused across stages.
#[derive(Debug, Clone)]
pub struct PreparedTruth {
    left: HandTargets,
    right: HandTargets,
    offset: Tensor,
    seg: Tensor,
    corr: Tensor,
    unit_m: f64,
}

fn rows3(points: &[Vec3], scale: f64) -> Tensor {
    let data = points.iter().flat_map(|p| p.map(|v| v * scale)).collect();
    Tensor::new([points.len(), 3], data).expect("n x 3")
}

fn rows2(points: &[[f64; 2]], scale: f64) -> Tensor {
    let data = points.iter().flat_map(|p| p.map(|v| v * scale)).collect();
    Tensor::new([points.len(), 2], data).expect("n x 2")
}

impl PreparedTruth {
    pub fn new(pair: &HandPair, gt: &GroundTruthSample, image_size: usize, weights: &LossWeights) -> Self {
        let unit = 1.0 / weights.unit_m;
        let px = 1.0 / image_size as f64;
        let hand = |h: Handedness| {
            let t = gt.hand(h);
            let mesh = t.vertices_relative();
            HandTargets {
                joints: rows3(&t.joints_relative(), unit),
                vertices: rows3(&mesh, unit),
                joints_2d: rows2(&t.joints_2d(), px),
                vertices_2d: rows2(&t.vertices_2d(), px),
                mesh,
                faces: Arc::clone(pair.get(h).faces()),
            }
        };
        PreparedTruth {
            left: hand(Handedness::Left),
            right: hand(Handedness::Right),
            offset: Tensor::new([1, 3], gt.offset.map(|v| v * unit).to_vec()).expect("1 x 3"),
            seg: gt.seg.to_tensor(),
            corr: gt.corr.to_tensor(),
            unit_m: weights.unit_m,
        }
    }

    fn hand(&self, h: Handedness) -> &HandTargets {
        match h {
            Handedness::Left => &self.left,
            Handedness::Right => &self.right,
        }
    }
}

/// Recorded loss terms and their weighted sum.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub joint3d: Var,
    pub joint2d: Var,
    pub mesh3d: Var,
    pub mesh2d: Var,
    pub offset: Var,
    pub normal: Var,
    pub edge: Var,
    pub seg: Var,
    pub corr: Var,
    pub total: Var,
}

impl LossVars {
    pub fn report(&self, tape: &Tape) -> LossReport {
        let v = |x: Var| tape.value(x).data()[0];
        LossReport {
            joint3d: v(self.joint3d),
            joint2d: v(self.joint2d),
            mesh3d: v(self.mesh3d),
            mesh2d: v(self.mesh2d),
            offset: v(self.offset),
            normal: v(self.normal),
            edge: v(self.edge),
            seg: v(self.seg),
            corr: v(self.corr),
            total: v(self.total),
        }
    }
}

struct Terms {
    joint3d: Vec<Var>,
    joint2d: Vec<Var>,
    mesh3d: Vec<Var>,
    mesh2d: Vec<Var>,
    offset: Vec<Var>,
    normal: Vec<Var>,
    edge: Vec<Var>,
}

fn stage_terms(tape: &mut Tape, stage: &StageVars, truth: &PreparedTruth, image_size: usize, acc: &mut Terms) -> Result<()> {
    let unit = 1.0 / truth.unit_m;
    let px = 1.0 / image_size as f64;
    for h in [Handedness::Left, Handedness::Right] {
        let p = stage.hand(h);
        let t = truth.hand(h);
        let mut pair = |pred: Var, s: f64, target: &Tensor| -> Result<Var> {
            let pred = tape.scale(pred, s);
            let target = tape.constant(target.clone());
            tape.smooth_l1_points(pred, target, BETA)
        };
        acc.joint3d.push(pair(p.joints, unit, &t.joints)?);
        acc.mesh3d.push(pair(p.vertices, unit, &t.vertices)?);
        acc.joint2d.push(pair(p.joints_2d, px, &t.joints_2d)?);
        acc.mesh2d.push(pair(p.vertices_2d, px, &t.vertices_2d)?);
        acc.normal.push(tape.normal_consistency(p.vertices, &t.mesh, &t.faces)?.0);
        let e = tape.edge_length_consistency(p.vertices, &t.mesh, &t.faces)?;
        acc.edge.push(tape.scale(e, unit));
    }
    let o = tape.reshape(stage.offset, &[1, 3])?;
    let o = tape.scale(o, unit);
    let target = tape.constant(truth.offset.clone());
    acc.offset.push(tape.smooth_l1_points(o, target, BETA)?);
    Ok(())
}

/// Sums every term over all stages and both hands, adds the pixel terms on
/// the final decoder map and weights them.
pub fn objective(
    tape: &mut Tape,
    vars: &ForwardVars,
    truth: &PreparedTruth,
    image_size: usize,
    weights: &LossWeights,
) -> Result<LossVars> {
    if vars.stages.is_empty() {
        return Err(Error::InvalidInput("objective: no stage outputs".into()));
    }
    let mut acc = Terms {
        joint3d: vec![],
        joint2d: vec![],
        mesh3d: vec![],
        mesh2d: vec![],
        offset: vec![],
        normal: vec![],
        edge: vec![],
    };
    for s in &vars.stages {
        stage_terms(tape, s, truth, image_size, &mut acc)?;
    }
    let (_, side, _) = tape.value(vars.seg).dims3()?;
    let map_target = |tape: &mut Tape, t: &Tensor| -> Result<Var> {
        let (_, h, _) = t.dims3()?;
        if h % side != 0 {
            return Err(Error::shape("objective", format!("map side {h} is not a multiple of {side}")));
        }
        let c = tape.constant(t.clone());
        if h == side {
            Ok(c)
        } else {
            tape.avg_pool(c, h / side)
        }
    };
    let seg_t = map_target(tape, &truth.seg)?;
    let corr_t = map_target(tape, &truth.corr)?;
    let seg = tape.mse(vars.seg, seg_t)?;
    let corr = tape.mse(vars.corr, corr_t)?;

    let mut sum = |v: &[Var]| tape.add_n(v);
    let joint3d = sum(&acc.joint3d)?;
    let joint2d = sum(&acc.joint2d)?;
    let mesh3d = sum(&acc.mesh3d)?;
    let mesh2d = sum(&acc.mesh2d)?;
    let offset = sum(&acc.offset)?;
    let normal = sum(&acc.normal)?;
    let edge = sum(&acc.edge)?;
    let weighted: Vec<Var> = [
        (joint3d, weights.joint3d),
        (joint2d, weights.joint2d),
        (mesh3d, weights.mesh3d),
        (mesh2d, weights.mesh2d),
        (offset, weights.offset),
        (normal, weights.normal),
        (edge, weights.edge),
        (seg, weights.seg),
        (corr, weights.corr),
    ]
    .into_iter()
    .map(|(v, w)| tape.scale(v, w))
    .collect();
    let total = tape.add_n(&weighted)?;
    Ok(LossVars {
        joint3d,
        joint2d,
        mesh3d,
        mesh2d,
        offset,
        normal,
        edge,
        seg,
        corr,
        total,
    })
}
