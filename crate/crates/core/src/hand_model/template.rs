//! Procedural hand template: a box palm with five tapered finger tubes.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Handedness, NUM_FINGERS, NUM_JOINTS, NUM_SHAPE, NUM_SKINNED};
use crate::geom::{self, Vec3};
use crate::numerics::{Matrix, Tensor};
use crate::{Error, Result};

pub const MIN_VERTEX_BUDGET: usize = 200;
pub const DEFAULT_VERTEX_BUDGET: usize = 402;

const NX: usize = 11;
const NZ: usize = 2;
// Finger order everywhere: thumb, index, middle, ring, pinky.
const TOP_PATCH_X: [usize; 4] = [9, 6, 3, 0];
const THUMB_PATCH_Y: usize = 1;
const SHAPE_STEP: f64 = 0.04;

#[derive(Debug, Clone, PartialEq)]
struct Proportions {
    palm_width: f64,
    palm_length: f64,
    palm_depth: f64,
    bones: [[f64; 3]; NUM_FINGERS],
    radius: [f64; NUM_FINGERS],
}

impl Proportions {
    fn nominal() -> Self {
        Proportions {
            palm_width: 0.085,
            palm_length: 0.09,
            palm_depth: 0.03,
            bones: [
                [0.040, 0.032, 0.027],
                [0.040, 0.025, 0.020],
                [0.045, 0.028, 0.021],
                [0.042, 0.027, 0.020],
                [0.033, 0.020, 0.018],
            ],
            radius: [0.0095, 0.0088, 0.0090, 0.0085, 0.0076],
        }
    }

    fn jittered(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::nominal();
        let mut j = |v: &mut f64| *v *= 1.0 + rng.gen_range(-0.02..0.02);
        j(&mut p.palm_width);
        j(&mut p.palm_length);
        j(&mut p.palm_depth);
        for f in 0..NUM_FINGERS {
            for b in 0..3 {
                j(&mut p.bones[f][b]);
            }
            j(&mut p.radius[f]);
        }
        p
    }

    /// Applies the multiplicative factors behind the ten shape directions.
    fn scaled(&self, f: &[f64; NUM_SHAPE]) -> Self {
        let mut p = self.clone();
        p.palm_width *= f[0];
        p.palm_length *= f[1];
        for (finger, bones) in p.bones.iter_mut().enumerate() {
            let own = if finger == 0 { f[4] } else { f[4 + finger] };
            for b in bones.iter_mut() {
                *b *= f[2] * own;
            }
        }
        for r in p.radius.iter_mut() {
            *r *= f[3];
        }
        p.palm_depth *= f[9];
        p
    }

    fn finger_length(&self, f: usize) -> f64 {
        self.bones[f].iter().sum()
    }
}

/// Mesh connectivity, fixed once the grid resolution is chosen.
#[derive(Debug, Clone)]
struct Topology {
    ny: usize,
    rings: usize,
    /// Lattice coordinates of the palm vertices, in output order.
    palm: Vec<[usize; 3]>,
    /// Hole loop (8 palm vertex ids) where each finger attaches.
    loops: [[usize; 8]; NUM_FINGERS],
    faces: Vec<[usize; 3]>,
    /// Two palm vertices straddling the wrist at mid-depth.
    wrist_pair: [usize; 2],
}

impl Topology {
    fn vertex_count(ny: usize, rings: usize) -> usize {
        let palm = (NX + 1) * (ny + 1) * (NZ + 1) - (NX - 1) * (ny - 1) * (NZ - 1);
        palm - NUM_FINGERS + NUM_FINGERS * (8 * rings + 1)
    }

    fn choose(budget: usize) -> Result<(usize, usize)> {
        if budget < MIN_VERTEX_BUDGET {
            return Err(Error::Mesh(format!(
                "vertex budget {budget} is below the minimum of {MIN_VERTEX_BUDGET}"
            )));
        }
        let mut best: Option<(usize, usize, usize)> = None;
        for rings in 1..=64 {
            for ny in 4..=64 {
                let v = Self::vertex_count(ny, rings);
                if v <= budget && best.map_or(true, |(bv, _, br)| v > bv || (v == bv && rings > br)) {
                    best = Some((v, ny, rings));
                }
            }
        }
        best.map(|(_, ny, r)| (ny, r))
            .ok_or_else(|| Error::Mesh(format!("vertex budget {budget} cannot close the surface")))
    }

    fn tube_start(&self, finger: usize) -> usize {
        self.palm.len() + finger * (8 * self.rings + 1)
    }

    fn tip(&self, finger: usize) -> usize {
        self.tube_start(finger) + 8 * self.rings
    }

    fn build(ny: usize, rings: usize) -> Result<Self> {
        let dims = [NX, ny, NZ];
        let on_surface = |p: [usize; 3]| (0..3).any(|a| p[a] == 0 || p[a] == dims[a]);
        let mut lattice_id: HashMap<[usize; 3], usize> = HashMap::new();
        let mut lattice: Vec<[usize; 3]> = Vec::new();
        for i in 0..=NX {
            for j in 0..=ny {
                for k in 0..=NZ {
                    let p = [i, j, k];
                    if on_surface(p) {
                        lattice_id.insert(p, lattice.len());
                        lattice.push(p);
                    }
                }
            }
        }

        // (fixed axis, side, u axis, v axis) with u × v pointing outward in
        // lattice index space.
        let sides: [(usize, bool, usize, usize); 6] = [
            (0, true, 1, 2),
            (0, false, 2, 1),
            (1, true, 2, 0),
            (1, false, 0, 2),
            (2, true, 0, 1),
            (2, false, 1, 0),
        ];
        let patch_of = |axis: usize, hi: bool, q: [usize; 3]| -> Option<usize> {
            if axis == 1 && hi && q[2] < 2 {
                TOP_PATCH_X
                    .iter()
                    .position(|&x0| q[0] >= x0 && q[0] < x0 + 2)
                    .map(|p| p + 1)
            } else if axis == 0 && hi && q[2] < 2 && q[1] >= THUMB_PATCH_Y && q[1] < THUMB_PATCH_Y + 2 {
                Some(0)
            } else {
                None
            }
        };
        let mut faces = Vec::new();
        let mut removed: [Vec<[usize; 3]>; NUM_FINGERS] = Default::default();
        for &(axis, hi, u, v) in &sides {
            for a in 0..dims[u] {
                for b in 0..dims[v] {
                    let corner = |da: usize, db: usize| {
                        let mut p = [0; 3];
                        p[axis] = if hi { dims[axis] } else { 0 };
                        p[u] = a + da;
                        p[v] = b + db;
                        lattice_id[&p]
                    };
                    let q = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
                    let mut origin = [0; 3];
                    origin[u] = a;
                    origin[v] = b;
                    let tris = [[q[0], q[1], q[2]], [q[0], q[2], q[3]]];
                    match patch_of(axis, hi, origin) {
                        Some(f) => removed[f].extend(tris),
                        None => faces.extend(tris),
                    }
                }
            }
        }

        let mut loops_lattice = [[0usize; 8]; NUM_FINGERS];
        for f in 0..NUM_FINGERS {
            let half_edges: HashSet<(usize, usize)> = removed[f]
                .iter()
                .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
                .collect();
            let mut next = HashMap::new();
            for &(a, b) in &half_edges {
                if !half_edges.contains(&(b, a)) {
                    next.insert(b, a);
                }
            }
            if next.len() != 8 {
                return Err(Error::Mesh(format!("finger {f}: hole has {} edges", next.len())));
            }
            let start = *next.keys().min().expect("non-empty");
            let mut cur = start;
            for slot in loops_lattice[f].iter_mut() {
                *slot = cur;
                cur = next[&cur];
            }
            if cur != start {
                return Err(Error::Mesh(format!("finger {f}: hole is not a single loop")));
            }
        }

        let used: HashSet<usize> = faces.iter().flatten().copied().collect();
        let mut remap = vec![usize::MAX; lattice.len()];
        let mut palm = Vec::new();
        for (old, p) in lattice.iter().enumerate() {
            if used.contains(&old) {
                remap[old] = palm.len();
                palm.push(*p);
            }
        }
        for face in faces.iter_mut() {
            for v in face.iter_mut() {
                *v = remap[*v];
            }
        }
        let loops = loops_lattice.map(|l| l.map(|v| remap[v]));
        let wrist_pair = [remap[lattice_id[&[0, 0, 1]]], remap[lattice_id[&[NX, 0, 1]]]];

        let mut topo = Topology {
            ny,
            rings,
            palm,
            loops,
            faces,
            wrist_pair,
        };
        for f in 0..NUM_FINGERS {
            let base = topo.tube_start(f);
            let ring = |r: usize, i: usize| base + 8 * r + (i % 8);
            for i in 0..8 {
                let (a0, a1) = (topo.loops[f][i], topo.loops[f][(i + 1) % 8]);
                let (b0, b1) = (ring(0, i), ring(0, i + 1));
                topo.faces.push([a1, a0, b0]);
                topo.faces.push([a1, b0, b1]);
                for r in 1..rings {
                    let (a0, a1) = (ring(r - 1, i), ring(r - 1, i + 1));
                    let (b0, b1) = (ring(r, i), ring(r, i + 1));
                    topo.faces.push([a1, a0, b0]);
                    topo.faces.push([a1, b0, b1]);
                }
                topo.faces.push([ring(rings - 1, i + 1), ring(rings - 1, i), topo.tip(f)]);
            }
        }
        Ok(topo)
    }
}

/// Vertex positions plus the straight-finger rest skeleton for one set of
/// proportions.
struct Geometry {
    vertices: Vec<Vec3>,
    joints: Vec<Vec3>,
    /// Distance of every tube node (hole loop, rings, tip) from the finger base.
    node_t: Vec<Vec<f64>>,
}

fn finger_direction(f: usize) -> Vec3 {
    if f == 0 {
        geom::normalize([1.0, -0.6, 0.0])
    } else {
        [0.0, -1.0, 0.0]
    }
}

fn geometry(topo: &Topology, p: &Proportions) -> Geometry {
    let ny = topo.ny as f64;
    let mut vertices: Vec<Vec3> = topo
        .palm
        .iter()
        .map(|&[i, j, k]| {
            [
                (i as f64 - NX as f64 / 2.0) * (p.palm_width / NX as f64),
                -(j as f64) * (p.palm_length / ny),
                (k as f64 - NZ as f64 / 2.0) * (p.palm_depth / NZ as f64),
            ]
        })
        .collect();
    let mut joints = vec![[0.0; 3]; NUM_SKINNED];
    let mut node_t = Vec::with_capacity(NUM_FINGERS);
    for f in 0..NUM_FINGERS {
        let hole: Vec<Vec3> = topo.loops[f].iter().map(|&v| vertices[v]).collect();
        let mut c = [0.0; 3];
        for h in &hole {
            c = geom::add(c, *h);
        }
        let c = geom::scale(c, 1.0 / 8.0);
        let d = finger_direction(f);
        let total = p.finger_length(f);
        let mut ts = vec![0.0];
        for r in 1..=topo.rings {
            let t = total * r as f64 / (topo.rings + 1) as f64;
            let radius = p.radius[f] * (1.0 - 0.3 * t / total);
            let centre = geom::add(c, geom::scale(d, t));
            for h in &hole {
                let o = geom::sub(*h, c);
                let perp = geom::sub(o, geom::scale(d, geom::dot(o, d)));
                vertices.push(geom::add(centre, geom::scale(geom::normalize(perp), radius)));
            }
            ts.push(t);
        }
        vertices.push(geom::add(c, geom::scale(d, total)));
        ts.push(total);
        node_t.push(ts);
        let [l1, l2, _] = p.bones[f];
        joints[1 + 3 * f] = c;
        joints[2 + 3 * f] = geom::add(c, geom::scale(d, l1));
        joints[3 + 3 * f] = geom::add(c, geom::scale(d, l1 + l2));
    }
    Geometry {
        vertices,
        joints,
        node_t,
    }
}

/// Static parts of a parametric hand: rest mesh, skinning weights, joint
/// regressor and shape directions.
#[derive(Debug, Clone, PartialEq)]
pub struct HandTemplate {
    pub(crate) handedness: Handedness,
    pub(crate) vertices: Vec<Vec3>,
    pub(crate) faces: Arc<Vec<[usize; 3]>>,
    pub(crate) skinning_weights: Matrix,
    pub(crate) joint_regressor: Matrix,
    pub(crate) shape_basis: Tensor,
    pub(crate) parents: Vec<Option<usize>>,
    pub(crate) rest_joints: Vec<Vec3>,
    pub(crate) tip_vertices: [usize; NUM_FINGERS],
    pub(crate) skin_sparse: Vec<Vec<(usize, f64)>>,
    pub(crate) regressor_sparse: Vec<Vec<(usize, f64)>>,
}

/// Builds the right-hand template with at most `vertex_budget` vertices.
///
/// The seed perturbs the proportions by about 2%; the same seed always
/// yields a bit-identical template.
pub fn build_template(seed: u64, vertex_budget: usize) -> Result<HandTemplate> {
    let (ny, rings) = Topology::choose(vertex_budget)?;
    let mut topo = Topology::build(ny, rings)?;
    let props = Proportions::jittered(seed);
    let base = geometry(&topo, &props);
    if signed_volume(&base.vertices, &topo.faces) < 0.0 {
        for f in topo.faces.iter_mut() {
            f.swap(1, 2);
        }
    }
    let v = base.vertices.len();

    let mut skin = vec![0.0; v * NUM_SKINNED];
    for pv in 0..topo.palm.len() {
        skin[pv * NUM_SKINNED] = 1.0;
    }
    for f in 0..NUM_FINGERS {
        let [l1, l2, l3] = props.bones[f];
        let bounds = [(0.0, 0.25 * l1), (l1, 0.25 * l2), (l1 + l2, 0.25 * l3)];
        let weights = |t: f64| {
            let s: Vec<f64> = bounds
                .iter()
                .map(|&(tb, h)| ((t - tb) / (2.0 * h) + 0.5).clamp(0.0, 1.0))
                .collect();
            [1.0 - s[0], s[0] - s[1], s[1] - s[2], s[2]]
        };
        let joints = [0, 1 + 3 * f, 2 + 3 * f, 3 + 3 * f];
        let mut set = |vert: usize, t: f64| {
            let row = &mut skin[vert * NUM_SKINNED..(vert + 1) * NUM_SKINNED];
            row.iter_mut().for_each(|x| *x = 0.0);
            for (j, w) in joints.iter().zip(weights(t)) {
                row[*j] += w;
            }
        };
        for &lv in &topo.loops[f] {
            set(lv, 0.0);
        }
        for r in 0..rings {
            for i in 0..8 {
                set(topo.tube_start(f) + 8 * r + i, base.node_t[f][r + 1]);
            }
        }
        set(topo.tip(f), base.node_t[f][rings + 1]);
    }

    let mut regressor = vec![0.0; NUM_SKINNED * v];
    for w in topo.wrist_pair {
        regressor[w] = 0.5;
    }
    for f in 0..NUM_FINGERS {
        let node_vertices = |n: usize| -> Vec<usize> {
            if n == 0 {
                topo.loops[f].to_vec()
            } else if n == rings + 1 {
                vec![topo.tip(f)]
            } else {
                (0..8).map(|i| topo.tube_start(f) + 8 * (n - 1) + i).collect()
            }
        };
        let [l1, l2, _] = props.bones[f];
        let ts = &base.node_t[f];
        for (slot, t) in [(1, 0.0), (2, l1), (3, l1 + l2)] {
            let row = &mut regressor[(slot + 3 * f) * v..(slot + 3 * f + 1) * v];
            let n = (0..=rings).find(|&n| t <= ts[n + 1]).unwrap_or(rings);
            let alpha = ((t - ts[n]) / (ts[n + 1] - ts[n])).clamp(0.0, 1.0);
            for (node, w) in [(n, 1.0 - alpha), (n + 1, alpha)] {
                if w == 0.0 {
                    continue;
                }
                let verts = node_vertices(node);
                let share = w / verts.len() as f64;
                for vi in verts {
                    row[vi] += share;
                }
            }
        }
    }

    let mut basis = vec![0.0; v * 3 * NUM_SHAPE];
    for b in 0..NUM_SHAPE {
        let h = 1e-4;
        let mut plus = [1.0; NUM_SHAPE];
        let mut minus = [1.0; NUM_SHAPE];
        plus[b] += h;
        minus[b] -= h;
        let gp = geometry(&topo, &props.scaled(&plus)).vertices;
        let gm = geometry(&topo, &props.scaled(&minus)).vertices;
        let mut mean = [0.0; 3];
        let mut col = vec![[0.0; 3]; v];
        for i in 0..v {
            for c in 0..3 {
                col[i][c] = SHAPE_STEP * (gp[i][c] - gm[i][c]) / (2.0 * h);
                mean[c] += col[i][c];
            }
        }
        for i in 0..v {
            for c in 0..3 {
                basis[(i * 3 + c) * NUM_SHAPE + b] = col[i][c] - mean[c] / v as f64;
            }
        }
    }

    let mut parents = vec![None; NUM_SKINNED];
    for f in 0..NUM_FINGERS {
        parents[1 + 3 * f] = Some(0);
        parents[2 + 3 * f] = Some(1 + 3 * f);
        parents[3 + 3 * f] = Some(2 + 3 * f);
    }
    let tip_vertices = std::array::from_fn(|f| topo.tip(f));
    HandTemplate::assemble(
        Handedness::Right,
        base.vertices,
        topo.faces,
        Matrix::new(v, NUM_SKINNED, skin)?,
        Matrix::new(NUM_SKINNED, v, regressor)?,
        Tensor::new([v, 3, NUM_SHAPE], basis)?,
        parents,
        base.joints,
        tip_vertices,
    )
}

pub(crate) fn signed_volume(vertices: &[Vec3], faces: &[[usize; 3]]) -> f64 {
    faces
        .iter()
        .map(|f| {
            let [a, b, c] = f.map(|i| vertices[i]);
            geom::dot(a, geom::cross(b, c)) / 6.0
        })
        .sum()
}

impl HandTemplate {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        handedness: Handedness,
        vertices: Vec<Vec3>,
        faces: Vec<[usize; 3]>,
        skinning_weights: Matrix,
        joint_regressor: Matrix,
        shape_basis: Tensor,
        parents: Vec<Option<usize>>,
        rest_joints: Vec<Vec3>,
        tip_vertices: [usize; NUM_FINGERS],
    ) -> Result<Self> {
        let v = vertices.len();
        let skin_sparse = (0..v)
            .map(|i| {
                (0..NUM_SKINNED)
                    .filter_map(|k| {
                        let w = skinning_weights.at(i, k);
                        (w != 0.0).then_some((k, w))
                    })
                    .collect()
            })
            .collect();
        let mut regressor_sparse: Vec<Vec<(usize, f64)>> = (0..NUM_SKINNED)
            .map(|k| {
                (0..v)
                    .filter_map(|i| {
                        let w = joint_regressor.at(k, i);
                        (w != 0.0).then_some((i, w))
                    })
                    .collect()
            })
            .collect();
        for tip in tip_vertices {
            regressor_sparse.push(vec![(tip, 1.0)]);
        }
        let t = HandTemplate {
            handedness,
            vertices,
            faces: Arc::new(faces),
            skinning_weights,
            joint_regressor,
            shape_basis,
            parents,
            rest_joints,
            tip_vertices,
            skin_sparse,
            regressor_sparse,
        };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        for (i, row) in self.skin_sparse.iter().enumerate() {
            let s: f64 = row.iter().map(|(_, w)| w).sum();
            if (s - 1.0).abs() > 1e-12 || row.iter().any(|(_, w)| *w < 0.0) {
                return Err(Error::Mesh(format!("skinning row {i} sums to {s}")));
            }
        }
        check_closed_oriented(self.vertices.len(), &self.faces)?;
        if self.parents[0].is_some() || self.parents.iter().enumerate().skip(1).any(|(k, p)| p.map_or(true, |p| p >= k)) {
            return Err(Error::Mesh("joint parents must precede children".into()));
        }
        Ok(())
    }

    /// The same hand reflected through the x = 0 plane, with winding
    /// reversed so normals keep pointing outward.
    pub fn mirrored(&self) -> HandTemplate {
        let flip = |v: &Vec3| [-v[0], v[1], v[2]];
        let mut basis = self.shape_basis.clone();
        let b = NUM_SHAPE;
        for i in 0..self.vertices.len() {
            for k in 0..b {
                basis.data_mut()[i * 3 * b + k] *= -1.0;
            }
        }
        HandTemplate {
            handedness: self.handedness.other(),
            vertices: self.vertices.iter().map(flip).collect(),
            faces: Arc::new(self.faces.iter().map(|f| [f[0], f[2], f[1]]).collect()),
            shape_basis: basis,
            rest_joints: self.rest_joints.iter().map(flip).collect(),
            ..self.clone()
        }
    }

    pub fn handedness(&self) -> Handedness {
        self.handedness
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &Arc<Vec<[usize; 3]>> {
        &self.faces
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn skinning_weights(&self) -> &Matrix {
        &self.skinning_weights
    }

    pub fn joint_regressor(&self) -> &Matrix {
        &self.joint_regressor
    }

    /// `[V, 3, B]`.
    pub fn shape_basis(&self) -> &Tensor {
        &self.shape_basis
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    /// Declared rest positions of the skinned joints.
    pub fn rest_joints(&self) -> &[Vec3] {
        &self.rest_joints
    }

    pub fn tip_vertices(&self) -> [usize; NUM_FINGERS] {
        self.tip_vertices
    }

    /// Rest skeleton in reporting order: wrist, then (base, middle, distal,
    /// tip) for thumb, index, middle, ring and pinky.
    pub fn rest_joints_21(&self) -> Vec<Vec3> {
        reporting_order(&self.rest_joints, |f| self.vertices[self.tip_vertices[f]])
    }

    /// 16 regressed joints plus 5 fingertip vertices, wrist first.
    pub fn joints_21(&self, vertices: &[Vec3]) -> Vec<Vec3> {
        let rows: Vec<Vec3> = self
            .regressor_sparse
            .iter()
            .map(|row| {
                let mut acc = [0.0; 3];
                for &(i, w) in row {
                    acc = geom::add(acc, geom::scale(vertices[i], w));
                }
                acc
            })
            .collect();
        reporting_order(&rows[..NUM_SKINNED], |f| rows[NUM_SKINNED + f])
    }

    /// Rows of the 21-joint regressor in reporting order.
    pub(crate) fn regressor_21(&self) -> Vec<&[(usize, f64)]> {
        let mut out: Vec<&[(usize, f64)]> = Vec::with_capacity(NUM_JOINTS);
        out.push(&self.regressor_sparse[0]);
        for f in 0..NUM_FINGERS {
            for s in 1..=3 {
                out.push(&self.regressor_sparse[s + 3 * f]);
            }
            out.push(&self.regressor_sparse[NUM_SKINNED + f]);
        }
        out
    }
}

fn reporting_order(skinned: &[Vec3], tip: impl Fn(usize) -> Vec3) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(NUM_JOINTS);
    out.push(skinned[0]);
    for f in 0..NUM_FINGERS {
        out.extend_from_slice(&skinned[1 + 3 * f..4 + 3 * f]);
        out.push(tip(f));
    }
    out
}

/// Every undirected edge must appear in exactly two faces, once in each
/// direction, and the Euler characteristic must be 2.
pub fn check_closed_oriented(num_vertices: usize, faces: &[[usize; 3]]) -> Result<()> {
    let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        if f.iter().any(|&v| v >= num_vertices) || f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
            return Err(Error::Mesh(format!("face {fi} is degenerate or out of range")));
        }
        for e in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            if directed.insert(e, fi).is_some() {
                return Err(Error::Mesh(format!("directed edge {e:?} used twice")));
            }
        }
    }
    for &(a, b) in directed.keys() {
        if !directed.contains_key(&(b, a)) {
            return Err(Error::Mesh(format!("edge ({a}, {b}) is on a boundary")));
        }
    }
    let used: HashSet<usize> = faces.iter().flatten().copied().collect();
    if used.len() != num_vertices {
        return Err(Error::Mesh(format!(
            "{} of {num_vertices} vertices are unreferenced",
            num_vertices - used.len()
        )));
    }
    let edges = directed.len() / 2;
    let euler = num_vertices as i64 - edges as i64 + faces.len() as i64;
    if euler != 2 {
        return Err(Error::Mesh(format!("Euler characteristic {euler}, expected 2")));
    }
    Ok(())
}
