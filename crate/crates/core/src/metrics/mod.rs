//! Evaluation metrics. Distances come in meters and are reported in
//! millimeters; 2D distances are in image pixels.

mod iv;
mod record;

pub use iv::{check_edge_manifold, interpenetration_volume, shared_voxel_count, MeshRef, VoxelGrid};
pub use record::{read_records, write_curve_csv, write_records, HandRecord, SampleRecord};

use serde::{Deserialize, Serialize};

use crate::geom::{self, Vec3};
use crate::hand_model::{TwoHandState, BONES_21, MIDDLE_BASE, NUM_JOINTS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Root {
    Wrist,
    MiddleBase,
}

impl Root {
    pub fn index(self) -> usize {
        match self {
            Root::Wrist => 0,
            Root::MiddleBase => MIDDLE_BASE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub root: Root,
    pub scale_by_gt_bone: bool,
    pub pck_max_mm: f64,
    pub pck_steps: usize,
    pub iv_voxel_cm: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            root: Root::Wrist,
            scale_by_gt_bone: true,
            pck_max_mm: 50.0,
            pck_steps: 51,
            iv_voxel_cm: 0.5,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pck_steps < 2 {
            return Err(Error::config("eval.pck_steps", "must be at least 2"));
        }
        if !(self.pck_max_mm > 0.0 && self.pck_max_mm.is_finite()) {
            return Err(Error::config("eval.pck_max_mm", "must be > 0"));
        }
        if !(self.iv_voxel_cm > 0.0 && self.iv_voxel_cm.is_finite()) {
            return Err(Error::config("eval.iv_voxel_cm", "must be > 0"));
        }
        Ok(())
    }
}

/// Sum of the 20 bone lengths of a 21-joint skeleton.
pub fn total_bone_length(joints: &[Vec3]) -> f64 {
    BONES_21.iter().map(|&(p, c)| geom::norm(geom::sub(joints[c], joints[p]))).sum()
}

/// Maps predicted points of one hand into the ground-truth frame: root
/// translation, then optionally the bone-length ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    pub pred_root: Vec3,
    pub gt_root: Vec3,
    pub scale: f64,
}

impl Alignment {
    pub fn new(pred_joints: &[Vec3], gt_joints: &[Vec3], cfg: &EvalConfig) -> Result<Self> {
        if pred_joints.len() != NUM_JOINTS || gt_joints.len() != NUM_JOINTS {
            return Err(Error::Metric(format!("expected {NUM_JOINTS} joints per hand")));
        }
        let r = cfg.root.index();
        let scale = if cfg.scale_by_gt_bone {
            let pred = total_bone_length(pred_joints);
            if !(pred > 0.0) {
                return Err(Error::Metric("predicted bone length is zero; cannot scale".into()));
            }
            total_bone_length(gt_joints) / pred
        } else {
            1.0
        };
        Ok(Alignment {
            pred_root: pred_joints[r],
            gt_root: gt_joints[r],
            scale,
        })
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        geom::add(geom::scale(geom::sub(p, self.pred_root), self.scale), self.gt_root)
    }
}

fn aligned_errors_mm(pred: &[Vec3], gt: &[Vec3], a: &Alignment) -> Result<Vec<f64>> {
    if pred.len() != gt.len() {
        return Err(Error::Metric(format!("{} predicted vs {} reference points", pred.len(), gt.len())));
    }
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            let rp = geom::scale(geom::sub(*p, a.pred_root), a.scale);
            1000.0 * geom::norm(geom::sub(rp, geom::sub(*g, a.gt_root)))
        })
        .collect())
}

/// Per-joint errors (mm) of both hands, left first.
pub fn joint_errors_mm(pred: &TwoHandState, gt: &TwoHandState, cfg: &EvalConfig) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * NUM_JOINTS);
    for (p, g) in [(&pred.left, &gt.left), (&pred.right, &gt.right)] {
        let a = Alignment::new(&p.joints, &g.joints, cfg)?;
        out.extend(aligned_errors_mm(&p.joints, &g.joints, &a)?);
    }
    Ok(out)
}

pub fn mpjpe(pred: &TwoHandState, gt: &TwoHandState, cfg: &EvalConfig) -> Result<f64> {
    Ok(mean(&joint_errors_mm(pred, gt, cfg)?))
}

/// Vertex errors use the joint alignment of the same hand.
pub fn vertex_errors_mm(pred: &TwoHandState, gt: &TwoHandState, cfg: &EvalConfig) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (p, g) in [(&pred.left, &gt.left), (&pred.right, &gt.right)] {
        let a = Alignment::new(&p.joints, &g.joints, cfg)?;
        out.extend(aligned_errors_mm(&p.vertices, &g.vertices, &a)?);
    }
    Ok(out)
}

pub fn mpvpe(pred: &TwoHandState, gt: &TwoHandState, cfg: &EvalConfig) -> Result<f64> {
    Ok(mean(&vertex_errors_mm(pred, gt, cfg)?))
}

/// Error (mm) of the left-minus-right wrist vector of one sample.
pub fn relative_root_error_mm(pred: &TwoHandState, gt: &TwoHandState) -> f64 {
    let d = geom::sub(pred.left_root_minus_right_root(), gt.left_root_minus_right_root());
    1000.0 * geom::norm(d)
}

/// Per-sample relative-root errors, averaged over samples.
pub fn mrrpe(pairs: &[(&TwoHandState, &TwoHandState)]) -> f64 {
    mean(&pairs.iter().map(|(p, g)| relative_root_error_mm(p, g)).collect::<Vec<_>>())
}

/// Mean pixel distance between predicted and reference 2D points.
pub fn miaa(pred: &[[f64; 2]], gt: &[[f64; 2]]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::Metric(format!("{} predicted vs {} reference 2D points", pred.len(), gt.len())));
    }
    Ok(mean(
        &pred
            .iter()
            .zip(gt)
            .map(|(p, g)| ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2)).sqrt())
            .collect::<Vec<_>>(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PckCurve {
    pub thresholds_mm: Vec<f64>,
    pub pck: Vec<f64>,
    pub auc: f64,
}

/// PCK on `pck_steps` evenly spaced thresholds over `[0, pck_max_mm]`.
///
/// The AUC is the exact area under the empirical PCK step curve over the
/// range, divided by its length; the sampled curve converges to it as the
/// grid is refined.
pub fn pck_auc(errors_mm: &[f64], cfg: &EvalConfig) -> Result<PckCurve> {
    if errors_mm.iter().any(|e| !(*e >= 0.0)) {
        return Err(Error::Metric("errors must be non-negative".into()));
    }
    let n = errors_mm.len().max(1) as f64;
    let max = cfg.pck_max_mm;
    let thresholds_mm: Vec<f64> = (0..cfg.pck_steps)
        .map(|i| max * i as f64 / (cfg.pck_steps - 1) as f64)
        .collect();
    let pck = thresholds_mm
        .iter()
        .map(|t| errors_mm.iter().filter(|e| **e <= *t).count() as f64 / n)
        .collect();
    let area: f64 = errors_mm.iter().map(|e| (max - e.min(max)) / max).sum();
    Ok(PckCurve {
        thresholds_mm,
        pck,
        auc: if errors_mm.is_empty() { 0.0 } else { area / n },
    })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub mpjpe: f64,
    pub mpvpe: f64,
    pub mrrpe: f64,
    pub miaa: f64,
    pub pck: PckCurve,
    pub iv: Option<f64>,
}

/// Streaming aggregation in sample order.
#[derive(Debug, Clone)]
pub struct EvalAccumulator {
    cfg: EvalConfig,
    joint_errors: Vec<f64>,
    vertex_sum: f64,
    vertex_count: usize,
    rr_sum: f64,
    pixel_sum: f64,
    pixel_count: usize,
    iv_sum: f64,
    with_iv: bool,
    samples: usize,
}

impl EvalAccumulator {
    pub fn new(cfg: EvalConfig, with_iv: bool) -> Self {
        EvalAccumulator {
            cfg,
            joint_errors: Vec::new(),
            vertex_sum: 0.0,
            vertex_count: 0,
            rr_sum: 0.0,
            pixel_sum: 0.0,
            pixel_count: 0,
            iv_sum: 0.0,
            with_iv,
            samples: 0,
        }
    }

    /// `pred_2d` are the predicted 2D vertices and `gt_2d` the projected
    /// reference vertices, both hands concatenated.
    pub fn push(&mut self, pred: &TwoHandState, gt: &TwoHandState, pred_2d: &[[f64; 2]], gt_2d: &[[f64; 2]]) -> Result<()> {
        self.joint_errors.extend(joint_errors_mm(pred, gt, &self.cfg)?);
        let v = vertex_errors_mm(pred, gt, &self.cfg)?;
        self.vertex_sum += v.iter().sum::<f64>();
        self.vertex_count += v.len();
        self.rr_sum += relative_root_error_mm(pred, gt);
        let px = miaa(pred_2d, gt_2d)?;
        self.pixel_sum += px * pred_2d.len() as f64;
        self.pixel_count += pred_2d.len();
        if self.with_iv {
            let l = MeshRef { vertices: &pred.left.vertices, faces: &pred.left.faces };
            let r = MeshRef { vertices: &pred.right.vertices, faces: &pred.right.faces };
            self.iv_sum += interpenetration_volume(l, r, self.cfg.iv_voxel_cm)?;
        }
        self.samples += 1;
        Ok(())
    }

    pub fn finish(&self) -> Result<EvalReport> {
        let s = self.samples.max(1) as f64;
        Ok(EvalReport {
            samples: self.samples,
            mpjpe: mean(&self.joint_errors),
            mpvpe: self.vertex_sum / self.vertex_count.max(1) as f64,
            mrrpe: self.rr_sum / s,
            miaa: self.pixel_sum / self.pixel_count.max(1) as f64,
            pck: pck_auc(&self.joint_errors, &self.cfg)?,
            iv: self.with_iv.then_some(self.iv_sum / s),
        })
    }
}
