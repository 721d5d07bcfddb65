//! Training objectives.
//!
//! Every term is a recorded tape op so it can sit at the end of a forward
//! pass. Reductions follow the summation structure of the objective: the
//! smooth-L1 kernel is averaged over the coordinates of one point, then
//! summed over points and over refinement stages.

mod objective;

pub use objective::{objective, LossVars, PreparedTruth};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geom::{self, Vec3};
use crate::numerics::{Tape, Tensor, Var};
use crate::{Error, Result};

fn same_shape(op: &'static str, t: &Tape, a: Var, b: Var) -> Result<()> {
    if t.value(a).shape() != t.value(b).shape() {
        return Err(Error::InvalidInput(format!(
            "{op}: prediction {:?} vs target {:?}",
            t.value(a).shape(),
            t.value(b).shape()
        )));
    }
    Ok(())
}

/// `0.5 x²/β` below `β`, `|x| - 0.5β` above.
pub fn smooth_l1_scalar(x: f64, beta: f64) -> f64 {
    let a = x.abs();
    if a < beta {
        0.5 * a * a / beta
    } else {
        a - 0.5 * beta
    }
}

impl Tape {
    /// Mean smooth-L1 between two tensors of equal shape.
    pub fn smooth_l1(&mut self, pred: Var, target: Var, beta: f64) -> Result<Var> {
        same_shape("smooth_l1", self, pred, target)?;
        let p = self.value(pred).data();
        let q = self.value(target).data();
        let n = p.len().max(1) as f64;
        let total: f64 = p.iter().zip(q).map(|(a, b)| smooth_l1_scalar(a - b, beta)).sum();
        Ok(self.push(Tensor::scalar(total / n), &[pred, target], move |ctx, g| {
            let go = ctx.grad[0] / n;
            let d: Vec<f64> = ctx
                .value(pred)
                .data()
                .iter()
                .zip(ctx.value(target).data())
                .map(|(a, b)| {
                    let x = a - b;
                    go * if x.abs() < beta { x / beta } else { x.signum() }
                })
                .collect();
            if let Some(s) = g.slot(pred) {
                s.iter_mut().zip(&d).for_each(|(a, b)| *a += b);
            }
            if let Some(s) = g.slot(target) {
                s.iter_mut().zip(&d).for_each(|(a, b)| *a -= b);
            }
        }))
    }

    /// `Σ_points smooth_l1(point)` for `[n, d]` tensors, i.e. `n` times the mean.
    pub fn smooth_l1_points(&mut self, pred: Var, target: Var, beta: f64) -> Result<Var> {
        let n = self.value(pred).dims2()?.0;
        let m = self.smooth_l1(pred, target, beta)?;
        Ok(self.scale(m, n as f64))
    }

    /// Mean squared error.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        same_shape("mse", self, pred, target)?;
        let d = self.sub(pred, target)?;
        let sq = self.mul(d, d)?;
        Ok(self.mean(sq))
    }

    /// `Σ_f Σ_{edges of f} |⟨ê, n_f^gt⟩|` for predicted vertices `[V, 3]`.
    /// Faces whose target normal is undefined are skipped; their count is
    /// returned alongside.
    pub fn normal_consistency(
        &mut self,
        pred: Var,
        target: &[Vec3],
        faces: &Arc<Vec<[usize; 3]>>,
    ) -> Result<(Var, usize)> {
        let p = mesh_rows("normal_consistency", self.value(pred), target.len())?;
        // Per face: unit normal and the three unit target edges. The target
        // edges lie in the plane, so ⟨ê, n⟩ = ⟨ê − ê_gt, n⟩; the second form
        // vanishes exactly when the prediction equals the target.
        let mut normals: Vec<Option<(Vec3, [Vec3; 3])>> = Vec::with_capacity(faces.len());
        let mut skipped = 0;
        for f in faces.iter() {
            let [a, b, c] = f.map(|i| target[i]);
            let n = geom::cross(geom::sub(b, a), geom::sub(c, a));
            let len = geom::norm(n);
            if len > 0.0 && len.is_finite() {
                let unit_edge = |i: usize, j: usize| {
                    let e = geom::sub(target[f[j]], target[f[i]]);
                    geom::scale(e, 1.0 / geom::norm(e))
                };
                let edges = [unit_edge(0, 1), unit_edge(1, 2), unit_edge(2, 0)];
                normals.push(Some((geom::scale(n, 1.0 / len), edges)));
            } else {
                normals.push(None);
                skipped += 1;
            }
        }
        let mut total = 0.0;
        for (f, n) in faces.iter().zip(&normals) {
            let Some((n, gt_edges)) = n else { continue };
            for (k, (i, j)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
                let e = geom::sub(p[f[j]], p[f[i]]);
                let len = geom::norm(e);
                if len > 0.0 {
                    let u = geom::scale(e, 1.0 / len);
                    total += geom::dot(geom::sub(u, gt_edges[k]), *n).abs();
                }
            }
        }
        let faces = Arc::clone(faces);
        let out = self.push(Tensor::scalar(total), &[pred], move |ctx, g| {
            let Some(s) = g.slot(pred) else { return };
            let p = ctx.value(pred).data();
            let at = |i: usize| [p[3 * i], p[3 * i + 1], p[3 * i + 2]];
            for (f, n) in faces.iter().zip(&normals) {
                let Some((n, gt_edges)) = n else { continue };
                for (k, (i, j)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
                    let e = geom::sub(at(f[j]), at(f[i]));
                    let len = geom::norm(e);
                    if len == 0.0 {
                        continue;
                    }
                    let u = geom::scale(e, 1.0 / len);
                    let c = geom::dot(geom::sub(u, gt_edges[k]), *n);
                    let d = geom::scale(geom::sub(*n, geom::scale(u, geom::dot(u, *n))), ctx.grad[0] * c.signum() / len);
                    for k in 0..3 {
                        s[3 * f[j] + k] += d[k];
                        s[3 * f[i] + k] -= d[k];
                    }
                }
            }
        });
        Ok((out, skipped))
    }

    /// `Σ_f Σ_{edges of f} | ‖e‖ - ‖e^gt‖ |`.
    pub fn edge_length_consistency(&mut self, pred: Var, target: &[Vec3], faces: &Arc<Vec<[usize; 3]>>) -> Result<Var> {
        let p = mesh_rows("edge_length_consistency", self.value(pred), target.len())?;
        let mut total = 0.0;
        let mut lengths = Vec::with_capacity(faces.len() * 3);
        for f in faces.iter() {
            for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                let lt = geom::norm(geom::sub(target[f[j]], target[f[i]]));
                lengths.push(lt);
                total += (geom::norm(geom::sub(p[f[j]], p[f[i]])) - lt).abs();
            }
        }
        let faces = Arc::clone(faces);
        Ok(self.push(Tensor::scalar(total), &[pred], move |ctx, g| {
            let Some(s) = g.slot(pred) else { return };
            let p = ctx.value(pred).data();
            let at = |i: usize| [p[3 * i], p[3 * i + 1], p[3 * i + 2]];
            let mut lt = lengths.iter();
            for f in faces.iter() {
                for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                    let target_len = *lt.next().expect("one length per edge");
                    let e = geom::sub(at(f[j]), at(f[i]));
                    let len = geom::norm(e);
                    if len == 0.0 {
                        continue;
                    }
                    let d = geom::scale(e, ctx.grad[0] * (len - target_len).signum() / len);
                    for k in 0..3 {
                        s[3 * f[j] + k] += d[k];
                        s[3 * f[i] + k] -= d[k];
                    }
                }
            }
        }))
    }
}

fn mesh_rows(op: &'static str, t: &Tensor, v: usize) -> Result<Vec<Vec3>> {
    if t.shape() != [v, 3] {
        return Err(Error::InvalidInput(format!("{op}: prediction {:?}, target has {v} vertices", t.shape())));
    }
    Ok(t.data().chunks(3).map(|c| [c[0], c[1], c[2]]).collect())
}

/// Term weights; the 2D terms act on coordinates divided by the image size
/// and the 3D terms on meters divided by [`LossWeights::unit_m`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub joint3d: f64,
    pub joint2d: f64,
    pub mesh3d: f64,
    pub mesh2d: f64,
    pub offset: f64,
    pub normal: f64,
    pub edge: f64,
    pub seg: f64,
    pub corr: f64,
    /// Length that counts as one unit for the 3D terms, in meters.
    pub unit_m: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            joint3d: 1.0,
            joint2d: 1.0,
            mesh3d: 1.0,
            mesh2d: 1.0,
            offset: 1.0,
            normal: 0.1,
            edge: 1.0,
            seg: 1.0,
            corr: 1.0,
            unit_m: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("joint3d", self.joint3d),
            ("joint2d", self.joint2d),
            ("mesh3d", self.mesh3d),
            ("mesh2d", self.mesh2d),
            ("offset", self.offset),
            ("normal", self.normal),
            ("edge", self.edge),
            ("seg", self.seg),
            ("corr", self.corr),
        ];
        for (name, w) in fields {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::config(format!("loss.{name}"), "weight must be finite and >= 0"));
            }
        }
        if !(self.unit_m > 0.0 && self.unit_m.is_finite()) {
            return Err(Error::config("loss.unit_m", "must be > 0"));
        }
        Ok(())
    }
}

/// Unweighted term values and their weighted sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub joint3d: f64,
    pub joint2d: f64,
    pub mesh3d: f64,
    pub mesh2d: f64,
    pub offset: f64,
    pub normal: f64,
    pub edge: f64,
    pub seg: f64,
    pub corr: f64,
    pub total: f64,
}

impl LossReport {
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        w.joint3d * self.joint3d
            + w.joint2d * self.joint2d
            + w.mesh3d * self.mesh3d
            + w.mesh2d * self.mesh2d
            + w.offset * self.offset
            + w.normal * self.normal
            + w.edge * self.edge
            + w.seg * self.seg
            + w.corr * self.corr
    }

    pub fn add(&mut self, o: &LossReport) {
        self.joint3d += o.joint3d;
        self.joint2d += o.joint2d;
        self.mesh3d += o.mesh3d;
        self.mesh2d += o.mesh2d;
        self.offset += o.offset;
        self.normal += o.normal;
        self.edge += o.edge;
        self.seg += o.seg;
        self.corr += o.corr;
        self.total += o.total;
    }

    pub fn scaled(&self, s: f64) -> LossReport {
        LossReport {
            joint3d: self.joint3d * s,
            joint2d: self.joint2d * s,
            mesh3d: self.mesh3d * s,
            mesh2d: self.mesh2d * s,
            offset: self.offset * s,
            normal: self.normal * s,
            edge: self.edge * s,
            seg: self.seg * s,
            corr: self.corr * s,
            total: self.total * s,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rot_y;

    fn scalar(t: &Tape, v: Var) -> f64 {
        t.value(v).item()
    }

    #[test]
    fn smooth_l1_examples() {
        let mut t = Tape::new();
        let p = t.constant(Tensor::from_vec(vec![0.5]));
        let z = t.constant(Tensor::from_vec(vec![0.0]));
        let l = t.smooth_l1(p, z, 1.0).unwrap();
        assert_eq!(scalar(&t, l), 0.125);
        let p = t.constant(Tensor::from_vec(vec![2.0]));
        let l = t.smooth_l1(p, z, 1.0).unwrap();
        assert_eq!(scalar(&t, l), 1.5);
        let l = t.smooth_l1(p, p, 1.0).unwrap();
        assert_eq!(scalar(&t, l), 0.0);
        let q = t.constant(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(matches!(t.smooth_l1(p, q, 1.0), Err(Error::InvalidInput(_))));
    }

    fn tri() -> (Vec<Vec3>, Arc<Vec<[usize; 3]>>) {
        (
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            Arc::new(vec![[0, 1, 2]]),
        )
    }

    #[test]
    fn normal_examples() {
        let (gt, faces) = tri();
        let mut t = Tape::new();
        let same = t.constant(Tensor::new([3, 3], gt.iter().flatten().copied().collect()).unwrap());
        let (l, skipped) = t.normal_consistency(same, &gt, &faces).unwrap();
        assert_eq!((scalar(&t, l), skipped), (0.0, 0));
        // edge 0→1 along +z
        let lifted = t.constant(Tensor::new([3, 3], vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap());
        let (l, _) = t.normal_consistency(lifted, &gt, &faces).unwrap();
        let expect = 1.0 + (1.0f64 / 2.0f64.sqrt());
        assert!((scalar(&t, l) - expect).abs() < 1e-15);
        let r = rot_y(0.7);
        let rgt: Vec<Vec3> = gt.iter().map(|v| geom::mat_vec(&r, *v)).collect();
        let rl: Vec<f64> = [[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]]
            .iter()
            .flat_map(|v| geom::mat_vec(&r, *v))
            .collect();
        let rl = t.constant(Tensor::new([3, 3], rl).unwrap());
        let (l2, _) = t.normal_consistency(rl, &rgt, &faces).unwrap();
        assert!((scalar(&t, l2) - expect).abs() < 1e-12);
        let degenerate = vec![[0.0; 3]; 3];
        let (l, skipped) = t.normal_consistency(same, &degenerate, &faces).unwrap();
        assert_eq!((scalar(&t, l), skipped), (0.0, 1));
    }

    #[test]
    fn edge_examples() {
        let (gt, faces) = tri();
        let mut t = Tape::new();
        let doubled = t.constant(Tensor::new([3, 3], gt.iter().flatten().map(|v| 2.0 * v).collect()).unwrap());
        let l = t.edge_length_consistency(doubled, &gt, &faces).unwrap();
        assert!((scalar(&t, l) - (2.0 + 2.0f64.sqrt())).abs() < 1e-12);
        let moved = t.constant(Tensor::new([3, 3], gt.iter().flat_map(|v| geom::add(*v, [3.0, -1.0, 2.0])).collect()).unwrap());
        let l = t.edge_length_consistency(moved, &gt, &faces).unwrap();
        assert!(scalar(&t, l).abs() < 1e-15);
    }

    #[test]
    fn mse_examples() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::full([2, 3, 3], 0.25));
        let b = t.constant(Tensor::full([2, 3, 3], 0.75));
        let l = t.mse(a, b).unwrap();
        let l2 = t.mse(b, a).unwrap();
        assert_eq!(scalar(&t, l), 0.25);
        assert_eq!(scalar(&t, l), scalar(&t, l2));
    }

    #[test]
    fn total_is_linear_in_weights() {
        let r = LossReport {
            joint3d: 1.0,
            joint2d: 2.0,
            mesh3d: 3.0,
            mesh2d: 4.0,
            offset: 5.0,
            normal: 6.0,
            edge: 7.0,
            seg: 8.0,
            corr: 9.0,
            total: 0.0,
        };
        let w = LossWeights::default();
        let mut w2 = w.clone();
        w2.edge *= 3.0;
        assert!((r.weighted_total(&w2) - r.weighted_total(&w) - 14.0).abs() < 1e-12);
    }
}
