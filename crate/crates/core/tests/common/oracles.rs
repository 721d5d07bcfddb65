//! Naive reimplementations of the evaluation metrics, written without the
//! library's helpers, and random instances to compare them on.

use std::sync::Arc;

use handrefine::hand_model::{HandMesh, TwoHandState};
use handrefine::metrics::{
    interpenetration_volume, joint_errors_mm, miaa, mpjpe, mpvpe, mrrpe, pck_auc, shared_voxel_count, EvalConfig,
    MeshRef, Root, VoxelGrid,
};
use handrefine::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type V3 = [f64; 3];

fn parent(j: usize) -> usize {
    if j % 4 == 1 { 0 } else { j - 1 }
}

fn dist(a: V3, b: V3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn bones(j: &[V3]) -> f64 {
    (1..21).map(|c| dist(j[c], j[parent(c)])).sum()
}

fn root_index(root: Root) -> usize {
    match root {
        Root::Wrist => 0,
        Root::MiddleBase => 9,
    }
}

/// Aligned per-point errors (mm) of one hand.
fn hand_errors(pj: &[V3], gj: &[V3], pts: &[V3], gpts: &[V3], cfg: &EvalConfig) -> Vec<f64> {
    let r = root_index(cfg.root);
    let s = if cfg.scale_by_gt_bone { bones(gj) / bones(pj) } else { 1.0 };
    pts.iter()
        .zip(gpts)
        .map(|(p, g)| {
            let mut q = [0.0; 3];
            for c in 0..3 {
                q[c] = (p[c] - pj[r][c]) * s + gj[r][c];
            }
            dist(q, *g) * 1000.0
        })
        .collect()
}

pub fn naive_mpjpe(pred: &TwoHandState, gt: &TwoHandState, cfg: &EvalConfig) -> f64 {
    let mut e = hand_errors(&pred.left.joints, &gt.left.joints, &pred.left.joints, &gt.left.joints, cfg);
    e.extend(hand_errors(&pred.right.joints, &gt.right.joints, &pred.right.joints, &gt.right.joints, cfg));
    e.iter().sum::<f64>() / e.len() as f64
}

pub fn naive_mpvpe(pred: &TwoHandState, gt: &TwoHandState, cfg: &EvalConfig) -> f64 {
    let mut e = hand_errors(&pred.left.joints, &gt.left.joints, &pred.left.vertices, &gt.left.vertices, cfg);
    e.extend(hand_errors(&pred.right.joints, &gt.right.joints, &pred.right.vertices, &gt.right.vertices, cfg));
    e.iter().sum::<f64>() / e.len() as f64
}

pub fn naive_mrrpe(pairs: &[(TwoHandState, TwoHandState)]) -> f64 {
    let mut total = 0.0;
    for (p, g) in pairs {
        let mut d = [0.0; 3];
        for c in 0..3 {
            d[c] = (p.left.joints[0][c] - p.right.joints[0][c]) - (g.left.joints[0][c] - g.right.joints[0][c]);
        }
        total += dist(d, [0.0; 3]) * 1000.0;
    }
    total / pairs.len() as f64
}

pub fn naive_miaa(pred: &[[f64; 2]], gt: &[[f64; 2]]) -> f64 {
    let mut total = 0.0;
    for i in 0..pred.len() {
        total += dist([pred[i][0], pred[i][1], 0.0], [gt[i][0], gt[i][1], 0.0]);
    }
    total / pred.len() as f64
}

/// PCK by counting and AUC by integrating the step curve between sorted
/// errors.
pub fn naive_pck_auc(errors: &[f64], max: f64, steps: usize) -> (Vec<f64>, f64) {
    let n = errors.len() as f64;
    let pck = (0..steps)
        .map(|i| {
            let t = max * i as f64 / (steps - 1) as f64;
            let mut k = 0;
            for e in errors {
                if *e <= t {
                    k += 1;
                }
            }
            k as f64 / n
        })
        .collect();
    let mut sorted: Vec<f64> = errors.iter().map(|e| e.min(max)).collect();
    sorted.sort_by(f64::total_cmp);
    let mut area = 0.0;
    for (i, e) in sorted.iter().enumerate() {
        let next = sorted.get(i + 1).copied().unwrap_or(max);
        area += (next - e) * (i + 1) as f64 / n;
    }
    (pck, area / max)
}

/// Whether the ray `o + t·x̂`, `t > 0`, passes through triangle `abc`
/// (Möller–Trumbore).
fn ray_hits(o: V3, a: V3, b: V3, c: V3) -> bool {
    let e1 = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let e2 = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    // d = x̂, so p = d × e2 and q = s × e1
    let p = [0.0, -e2[2], e2[1]];
    let det = e1[1] * p[1] + e1[2] * p[2];
    if det == 0.0 {
        return false;
    }
    let s = [o[0] - a[0], o[1] - a[1], o[2] - a[2]];
    let u = (s[1] * p[1] + s[2] * p[2]) / det;
    let q = [s[1] * e1[2] - s[2] * e1[1], s[2] * e1[0] - s[0] * e1[2], s[0] * e1[1] - s[1] * e1[0]];
    let v = q[0] / det;
    let t = (e2[0] * q[0] + e2[1] * q[1] + e2[2] * q[2]) / det;
    u > 0.0 && v > 0.0 && u + v < 1.0 && t > 0.0
}

/// Majority over three slightly offset +x rays of the crossing parity.
fn inside(p: V3, v: &[V3], f: &[[usize; 3]]) -> bool {
    let votes = [(0.0, 0.0), (-0.4, 0.9), (-0.9, -0.5)]
        .iter()
        .filter(|(dy, dz)| {
            let o = [p[0], p[1] + dy * 1e-7, p[2] + dz * 1e-7];
            f.iter().filter(|t| ray_hits(o, v[t[0]], v[t[1]], v[t[2]])).count() % 2 == 1
        })
        .count();
    votes >= 2
}

/// Counts voxel centres of the shared grid inside both meshes, casting
/// fresh rays from every centre of the grid.
pub fn naive_shared_voxels(a: MeshRef<'_>, b: MeshRef<'_>, voxel: f64) -> u64 {
    let g = VoxelGrid::around(a, b, voxel);
    let mut n = 0;
    for i in 0..g.dims[0] {
        for j in 0..g.dims[1] {
            for k in 0..g.dims[2] {
                let p = [g.center(i, 0), g.center(j, 1), g.center(k, 2)];
                if inside(p, a.vertices, a.faces) && inside(p, b.vertices, b.faces) {
                    n += 1;
                }
            }
        }
    }
    n
}

fn rand_v3(rng: &mut ChaCha8Rng, s: f64) -> V3 {
    [rng.gen_range(-s..s), rng.gen_range(-s..s), rng.gen_range(-s..s)]
}

fn random_hand(rng: &mut ChaCha8Rng, verts: usize) -> HandMesh {
    HandMesh {
        vertices: (0..verts).map(|_| rand_v3(rng, 0.1)).collect(),
        joints: (0..21).map(|_| rand_v3(rng, 0.1)).collect(),
        faces: Arc::new(Vec::new()),
    }
}

fn random_state(rng: &mut ChaCha8Rng, verts: usize) -> TwoHandState {
    TwoHandState {
        left: random_hand(rng, verts),
        right: random_hand(rng, verts),
        offset: rand_v3(rng, 0.2),
    }
}

/// Rotated, stretched octahedron around `centre` (meters).
pub fn octahedron(rng: &mut ChaCha8Rng, centre: V3, size: f64) -> (Vec<V3>, Vec<[usize; 3]>) {
    let (a, b, c) = (rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3));
    let rot = |v: V3| -> V3 {
        let (sa, ca) = f64::sin_cos(a);
        let (sb, cb) = f64::sin_cos(b);
        let (sc, cc) = f64::sin_cos(c);
        let v = [v[0], ca * v[1] - sa * v[2], sa * v[1] + ca * v[2]];
        let v = [cb * v[0] + sb * v[2], v[1], -sb * v[0] + cb * v[2]];
        [cc * v[0] - sc * v[1], sc * v[0] + cc * v[1], v[2]]
    };
    let r: Vec<f64> = (0..6).map(|_| size * rng.gen_range(0.5..1.0)).collect();
    let dirs = [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0]];
    let v = dirs
        .iter()
        .zip(&r)
        .map(|(d, r)| {
            let p = rot([d[0] * r, d[1] * r, d[2] * r]);
            [p[0] + centre[0], p[1] + centre[1], p[2] + centre[2]]
        })
        .collect();
    let f = vec![[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4], [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]];
    (v, f)
}

#[derive(Debug, Default)]
pub struct OracleSummary {
    pub instances: usize,
    pub mpjpe: f64,
    pub mpvpe: f64,
    pub mrrpe: f64,
    pub miaa: f64,
    pub pck: f64,
    pub voxel_mismatches: u64,
    pub voxels_compared: u64,
}

/// Largest disagreement per metric over `count` random instances.
pub fn compare(count: usize, seed: u64, hands: &[(Vec<V3>, Arc<Vec<[usize; 3]>>)]) -> Result<OracleSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = OracleSummary {
        instances: count,
        ..Default::default()
    };
    for i in 0..count {
        let cfg = EvalConfig {
            root: if rng.gen_bool(0.5) { Root::Wrist } else { Root::MiddleBase },
            scale_by_gt_bone: rng.gen_bool(0.5),
            pck_max_mm: rng.gen_range(20.0..80.0),
            pck_steps: rng.gen_range(2..80),
            iv_voxel_cm: 0.5,
        };
        let verts = rng.gen_range(1..40);
        let pred = random_state(&mut rng, verts);
        let gt = random_state(&mut rng, verts);
        s.mpjpe = s.mpjpe.max((mpjpe(&pred, &gt, &cfg)? - naive_mpjpe(&pred, &gt, &cfg)).abs());
        s.mpvpe = s.mpvpe.max((mpvpe(&pred, &gt, &cfg)? - naive_mpvpe(&pred, &gt, &cfg)).abs());

        let pairs: Vec<(TwoHandState, TwoHandState)> =
            (0..rng.gen_range(1..5)).map(|_| (random_state(&mut rng, 1), random_state(&mut rng, 1))).collect();
        let refs: Vec<(&TwoHandState, &TwoHandState)> = pairs.iter().map(|(p, g)| (p, g)).collect();
        s.mrrpe = s.mrrpe.max((mrrpe(&refs) - naive_mrrpe(&pairs)).abs());

        let n2 = rng.gen_range(1..60);
        let p2: Vec<[f64; 2]> = (0..n2).map(|_| [rng.gen_range(0.0..64.0), rng.gen_range(0.0..64.0)]).collect();
        let g2: Vec<[f64; 2]> = (0..n2).map(|_| [rng.gen_range(0.0..64.0), rng.gen_range(0.0..64.0)]).collect();
        s.miaa = s.miaa.max((miaa(&p2, &g2)? - naive_miaa(&p2, &g2)).abs());

        let errs = joint_errors_mm(&pred, &gt, &cfg)?;
        let mut errs: Vec<f64> = errs.iter().map(|e| e * rng.gen_range(0.0..0.5)).collect();
        // Some errors exactly on grid thresholds.
        errs.push(cfg.pck_max_mm / 2.0);
        errs.push(0.0);
        let curve = pck_auc(&errs, &cfg)?;
        let (pck, auc) = naive_pck_auc(&errs, cfg.pck_max_mm, cfg.pck_steps);
        let d = curve.pck.iter().zip(&pck).map(|(a, b)| (a - b).abs()).fold((curve.auc - auc).abs(), f64::max);
        s.pck = s.pck.max(d);

        let (va, fa, vb, fb) = if i % 10 == 9 && !hands.is_empty() {
            let (v, f) = &hands[i / 10 % hands.len()];
            let t = rand_v3(&mut rng, 0.03);
            let vb = v.iter().map(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]]).collect();
            (v.clone(), f.to_vec(), vb, f.to_vec())
        } else {
            let (va, fa) = octahedron(&mut rng, [0.0; 3], 0.02);
            let c = rand_v3(&mut rng, 0.02);
            let (vb, fb) = octahedron(&mut rng, c, 0.02);
            (va, fa, vb, fb)
        };
        let (a, b) = (MeshRef { vertices: &va, faces: &fa }, MeshRef { vertices: &vb, faces: &fb });
        let voxel_cm = rng.gen_range(0.3..0.7);
        let voxel = voxel_cm / 100.0;
        let lib = shared_voxel_count(a, b, voxel)?;
        let naive = naive_shared_voxels(a, b, voxel);
        s.voxel_mismatches += lib.abs_diff(naive);
        s.voxels_compared += naive;
        let swapped = interpenetration_volume(b, a, voxel_cm)?;
        if swapped != naive as f64 * voxel_cm.powi(3) {
            s.voxel_mismatches += 1;
        }
    }
    Ok(s)
}
