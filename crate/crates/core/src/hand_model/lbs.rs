//! Linear blend skinning and its reverse-mode derivative.

use std::sync::Arc;

use super::rotation::{rodrigues, rodrigues_vjp};
use super::{HandMesh, HandParams, HandTemplate, NUM_JOINTS, NUM_SHAPE, NUM_SKINNED, POSE_DIM};
use crate::geom::{self, Mat3, Vec3, IDENTITY};
use crate::numerics::{Tape, Tensor, Var};
use crate::{Error, Result};

struct Kinematics {
    shaped: Vec<Vec3>,
    joints: Vec<Vec3>,
    local: Vec<Mat3>,
    global: Vec<Mat3>,
    /// `(I - R_k) J_k`
    pivot: Vec<Vec3>,
    vertices: Vec<Vec3>,
}

fn check_inputs(pose: &[f64], shape: &[f64]) -> Result<()> {
    if pose.len() != POSE_DIM || shape.len() != NUM_SHAPE {
        return Err(Error::shape(
            "lbs",
            format!("pose {} (want {POSE_DIM}), shape {} (want {NUM_SHAPE})", pose.len(), shape.len()),
        ));
    }
    if pose.iter().chain(shape).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("hand pose/shape parameters".into()));
    }
    Ok(())
}

/// Per-vertex displacement `Σ_b β_b S_b`.
pub(crate) fn shape_offsets(t: &HandTemplate, shape: &[f64]) -> Vec<Vec3> {
    let basis = t.shape_basis.data();
    (0..t.vertices.len())
        .map(|i| {
            let mut out = [0.0; 3];
            for (c, o) in out.iter_mut().enumerate() {
                let row = &basis[(i * 3 + c) * NUM_SHAPE..(i * 3 + c + 1) * NUM_SHAPE];
                for (b, s) in row.iter().zip(shape) {
                    *o += b * s;
                }
            }
            out
        })
        .collect()
}

fn kinematics(t: &HandTemplate, pose: &[f64], shape: &[f64]) -> Kinematics {
    let shaped: Vec<Vec3> = t
        .vertices
        .iter()
        .zip(shape_offsets(t, shape))
        .map(|(v, d)| geom::add(*v, d))
        .collect();
    let joints: Vec<Vec3> = t.regressor_sparse[..NUM_SKINNED]
        .iter()
        .map(|row| {
            let mut acc = [0.0; 3];
            for &(i, w) in row {
                acc = geom::add(acc, geom::scale(shaped[i], w));
            }
            acc
        })
        .collect();
    let local: Vec<Mat3> = pose.chunks(3).map(|p| rodrigues([p[0], p[1], p[2]])).collect();
    let mut global = vec![IDENTITY; NUM_SKINNED];
    let mut pivot = vec![[0.0; 3]; NUM_SKINNED];
    let mut offset = vec![[0.0; 3]; NUM_SKINNED];
    for k in 0..NUM_SKINNED {
        pivot[k] = geom::sub(joints[k], geom::mat_vec(&local[k], joints[k]));
        match t.parents[k] {
            None => {
                global[k] = local[k];
                offset[k] = pivot[k];
            }
            Some(p) => {
                global[k] = geom::mat_mul(&global[p], &local[k]);
                offset[k] = geom::add(offset[p], geom::mat_vec(&global[p], pivot[k]));
            }
        }
    }
    let deltas: Vec<Mat3> = global.iter().map(|g| geom::mat_sub(g, &IDENTITY)).collect();
    let vertices = shaped
        .iter()
        .zip(&t.skin_sparse)
        .map(|(v, row)| {
            let mut moved = [0.0; 3];
            for &(k, w) in row {
                let d = geom::add(geom::mat_vec(&deltas[k], *v), offset[k]);
                moved = geom::add(moved, geom::scale(d, w));
            }
            geom::add(*v, moved)
        })
        .collect();
    Kinematics {
        shaped,
        joints,
        local,
        global,
        pivot,
        vertices,
    }
}

/// Poses a template. With zero pose and shape the result is the template
/// itself, bit for bit.
pub fn lbs_forward(template: &HandTemplate, params: &HandParams) -> Result<HandMesh> {
    if params.pose.len() != NUM_SKINNED {
        return Err(Error::shape("lbs", format!("{} pose rows, want {NUM_SKINNED}", params.pose.len())));
    }
    let pose: Vec<f64> = params.pose.iter().flatten().copied().collect();
    check_inputs(&pose, &params.shape)?;
    let kin = kinematics(template, &pose, &params.shape);
    let joints = template.joints_21(&kin.vertices);
    Ok(HandMesh {
        vertices: kin.vertices,
        joints,
        faces: Arc::clone(&template.faces),
    })
}

fn add_outer(m: &mut Mat3, a: Vec3, b: Vec3, w: f64) {
    for r in 0..3 {
        for c in 0..3 {
            m[r][c] += w * a[r] * b[c];
        }
    }
}

impl Tape {
    /// Skinned vertices `[V, 3]` from pose (48 values) and shape (10 values).
    pub fn lbs(&mut self, template: &Arc<HandTemplate>, pose: Var, shape: Var) -> Result<Var> {
        let pose_v = self.value(pose).data().to_vec();
        let shape_v = self.value(shape).data().to_vec();
        check_inputs(&pose_v, &shape_v)?;
        let kin = kinematics(template, &pose_v, &shape_v);
        let v = kin.vertices.len();
        let out = Tensor::new([v, 3], kin.vertices.iter().flatten().copied().collect())?;
        let t = Arc::clone(template);
        Ok(self.push(out, &[pose, shape], move |ctx, g| {
            let grad = ctx.grad;
            let mut g_rg = vec![[[0.0; 3]; 3]; NUM_SKINNED];
            let mut g_off = vec![[0.0; 3]; NUM_SKINNED];
            let mut g_shaped = vec![[0.0; 3]; v];
            for i in 0..v {
                let gi = [grad[3 * i], grad[3 * i + 1], grad[3 * i + 2]];
                let mut gs = gi;
                for &(k, w) in &t.skin_sparse[i] {
                    add_outer(&mut g_rg[k], gi, kin.shaped[i], w);
                    g_off[k] = geom::add(g_off[k], geom::scale(gi, w));
                    let back = geom::sub(geom::mat_t_vec(&kin.global[k], gi), gi);
                    gs = geom::add(gs, geom::scale(back, w));
                }
                g_shaped[i] = gs;
            }
            let mut g_joint = vec![[0.0; 3]; NUM_SKINNED];
            let mut g_pose = vec![0.0; POSE_DIM];
            for k in (0..NUM_SKINNED).rev() {
                let (mut g_local, g_pivot) = match t.parents[k] {
                    None => (g_rg[k], g_off[k]),
                    Some(p) => {
                        let gp = &kin.global[p];
                        let rt = geom::transpose(&kin.local[k]);
                        let up = geom::mat_mul(&g_rg[k], &rt);
                        g_rg[p] = geom::mat_add(&g_rg[p], &up);
                        let gk = g_off[k];
                        g_off[p] = geom::add(g_off[p], gk);
                        add_outer(&mut g_rg[p], gk, kin.pivot[k], 1.0);
                        let gpt = geom::transpose(gp);
                        (geom::mat_mul(&gpt, &g_rg[k]), geom::mat_vec(&gpt, gk))
                    }
                };
                add_outer(&mut g_local, g_pivot, kin.joints[k], -1.0);
                let back = geom::sub(g_pivot, geom::mat_t_vec(&kin.local[k], g_pivot));
                g_joint[k] = geom::add(g_joint[k], back);
                let th = [pose_v[3 * k], pose_v[3 * k + 1], pose_v[3 * k + 2]];
                let gt = rodrigues_vjp(th, &g_local);
                g_pose[3 * k..3 * k + 3].copy_from_slice(&gt);
            }
            if let Some(s) = g.slot(pose) {
                for (d, x) in s.iter_mut().zip(&g_pose) {
                    *d += x;
                }
            }
            if g.wants(shape) {
                for (k, row) in t.regressor_sparse[..NUM_SKINNED].iter().enumerate() {
                    for &(i, w) in row {
                        g_shaped[i] = geom::add(g_shaped[i], geom::scale(g_joint[k], w));
                    }
                }
                let basis = t.shape_basis.data();
                let s = g.slot(shape).expect("wanted");
                for i in 0..v {
                    for c in 0..3 {
                        let row = &basis[(i * 3 + c) * NUM_SHAPE..(i * 3 + c + 1) * NUM_SHAPE];
                        for (d, b) in s.iter_mut().zip(row) {
                            *d += b * g_shaped[i][c];
                        }
                    }
                }
            }
        }))
    }

    /// The 21 reported joints `[21, 3]` of skinned vertices `[V, 3]`.
    pub fn regress_joints(&mut self, template: &Arc<HandTemplate>, vertices: Var) -> Result<Var> {
        let vals = self.value(vertices);
        let v = template.num_vertices();
        if vals.shape() != [v, 3] {
            return Err(Error::shape("regress_joints", format!("want [{v}, 3], got {:?}", vals.shape())));
        }
        let src = vals.data();
        let rows = template.regressor_21();
        let mut out = vec![0.0; NUM_JOINTS * 3];
        for (j, row) in rows.iter().enumerate() {
            for &(i, w) in row.iter() {
                for c in 0..3 {
                    out[3 * j + c] += w * src[3 * i + c];
                }
            }
        }
        let t = Arc::clone(template);
        Ok(self.push(Tensor::new([NUM_JOINTS, 3], out)?, &[vertices], move |ctx, g| {
            let Some(s) = g.slot(vertices) else { return };
            for (j, row) in t.regressor_21().iter().enumerate() {
                for &(i, w) in row.iter() {
                    for c in 0..3 {
                        s[3 * i + c] += w * ctx.grad[3 * j + c];
                    }
                }
            }
        }))
    }
}
