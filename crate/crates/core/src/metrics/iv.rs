//! Interpenetration volume by voxel parity.

use std::collections::HashMap;

use crate::geom::Vec3;
use crate::{Error, Result};

/// Ray offsets (in multiples of the jitter step) used for the three
/// consistency rays; further offsets are tried when a ray grazes an edge.
const RAY_OFFSETS: [(f64, f64); 8] = [
    (0.0, 0.0),
    (0.7, 0.3),
    (-0.4, 0.9),
    (0.2, -0.8),
    (-0.9, -0.5),
    (0.5, 0.6),
    (-0.6, 0.1),
    (0.1, 0.4),
];
const JITTER: f64 = 1e-7;

/// A triangle mesh borrowed for voxelisation.
#[derive(Debug, Clone, Copy)]
pub struct MeshRef<'a> {
    pub vertices: &'a [Vec3],
    pub faces: &'a [[usize; 3]],
}

impl MeshRef<'_> {
    fn aabb(&self) -> (Vec3, Vec3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in self.vertices {
            for c in 0..3 {
                lo[c] = lo[c].min(v[c]);
                hi[c] = hi[c].max(v[c]);
            }
        }
        (lo, hi)
    }
}

/// Every undirected edge must border exactly two faces.
pub fn check_edge_manifold(mesh: MeshRef<'_>) -> Result<()> {
    let mut count: HashMap<(usize, usize), u32> = HashMap::new();
    for f in mesh.faces {
        if f.iter().any(|&i| i >= mesh.vertices.len()) {
            return Err(Error::Metric("face index out of range".into()));
        }
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            *count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    if mesh.faces.is_empty() || count.values().any(|&c| c != 2) {
        return Err(Error::Metric("mesh is not watertight".into()));
    }
    Ok(())
}

/// The voxel grid shared by both meshes: anchored one voxel below the
/// minimum corner of their joint bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGrid {
    pub origin: Vec3,
    pub voxel: f64,
    pub dims: [usize; 3],
}

impl VoxelGrid {
    pub fn around(a: MeshRef<'_>, b: MeshRef<'_>, voxel: f64) -> Self {
        let (la, ha) = a.aabb();
        let (lb, hb) = b.aabb();
        let mut origin = [0.0; 3];
        let mut dims = [0; 3];
        for c in 0..3 {
            origin[c] = la[c].min(lb[c]) - voxel;
            let hi = ha[c].max(hb[c]) + voxel;
            dims[c] = ((hi - origin[c]) / voxel).ceil() as usize;
        }
        VoxelGrid { origin, voxel, dims }
    }

    pub fn center(&self, i: usize, axis: usize) -> f64 {
        self.origin[axis] + (i as f64 + 0.5) * self.voxel
    }

    /// Voxel index range along `axis` whose centres lie in `[lo, hi]`.
    fn range(&self, axis: usize, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let first = (0..self.dims[axis]).find(|&i| self.center(i, axis) >= lo);
        let Some(first) = first else { return 0..0 };
        let mut end = first;
        while end < self.dims[axis] && self.center(end, axis) <= hi {
            end += 1;
        }
        first..end
    }
}

enum Crossings {
    Grazing,
    Hits(Vec<f64>),
}

/// x positions where the line `(·, y, z)` crosses the mesh.
fn crossings(mesh: MeshRef<'_>, y: f64, z: f64) -> Crossings {
    let mut xs = Vec::new();
    for f in mesh.faces {
        let [a, b, c] = f.map(|i| mesh.vertices[i]);
        let w0 = (b[1] - y) * (c[2] - z) - (b[2] - z) * (c[1] - y);
        let w1 = (c[1] - y) * (a[2] - z) - (c[2] - z) * (a[1] - y);
        let w2 = (a[1] - y) * (b[2] - z) - (a[2] - z) * (b[1] - y);
        let pos = w0 > 0.0 && w1 > 0.0 && w2 > 0.0;
        let neg = w0 < 0.0 && w1 < 0.0 && w2 < 0.0;
        if pos || neg {
            let s = w0 + w1 + w2;
            xs.push((w0 * a[0] + w1 * b[0] + w2 * c[0]) / s);
            continue;
        }
        let zeros = [w0, w1, w2].iter().filter(|w| **w == 0.0).count();
        let others_agree = [w0, w1, w2].iter().all(|w| *w >= 0.0) || [w0, w1, w2].iter().all(|w| *w <= 0.0);
        if zeros > 0 && zeros < 3 && others_agree {
            return Crossings::Grazing;
        }
    }
    xs.sort_by(f64::total_cmp);
    Crossings::Hits(xs)
}

/// Inside flags for the voxel centres `xs` of one row, using the first
/// non-grazing ray from `offsets`. A closed surface is crossed an even
/// number of times by a full line; an odd count means a leak.
fn row_parity(mesh: MeshRef<'_>, y: f64, z: f64, xs: &[f64], offsets: &[(f64, f64)]) -> Result<Vec<bool>> {
    for &(dy, dz) in offsets {
        if let Crossings::Hits(hits) = crossings(mesh, y + dy * JITTER, z + dz * JITTER) {
            if hits.len() % 2 == 1 {
                return Err(Error::Metric("odd ray crossing count; mesh is not watertight".into()));
            }
            return Ok(xs
                .iter()
                .map(|x| {
                    let beyond = hits.len() - hits.partition_point(|h| h <= x);
                    beyond % 2 == 1
                })
                .collect());
        }
    }
    Err(Error::Metric("every jittered ray grazed the mesh".into()))
}

/// Rows are probed with three rays from different starting offsets. Each
/// voxel takes the majority verdict: centres within the jitter of a surface
/// nearly parallel to +x can legitimately flip between rays.
fn row_inside(mesh: MeshRef<'_>, y: f64, z: f64, xs: &[f64]) -> Result<Vec<bool>> {
    let rays = [0, 2, 4]
        .into_iter()
        .map(|start| row_parity(mesh, y, z, xs, &RAY_OFFSETS[start..]))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..xs.len())
        .map(|i| rays.iter().filter(|r| r[i]).count() >= 2)
        .collect())
}

/// Number of voxels whose centres lie inside both meshes.
pub fn shared_voxel_count(a: MeshRef<'_>, b: MeshRef<'_>, voxel: f64) -> Result<u64> {
    if !(voxel > 0.0 && voxel.is_finite()) {
        return Err(Error::Metric(format!("voxel size must be positive, got {voxel}")));
    }
    check_edge_manifold(a)?;
    check_edge_manifold(b)?;
    let grid = VoxelGrid::around(a, b, voxel);
    let (la, ha) = a.aabb();
    let (lb, hb) = b.aabb();
    let lo: Vec<f64> = (0..3).map(|c| la[c].max(lb[c])).collect();
    let hi: Vec<f64> = (0..3).map(|c| ha[c].min(hb[c])).collect();
    let rx = grid.range(0, lo[0], hi[0]);
    let ry = grid.range(1, lo[1], hi[1]);
    let rz = grid.range(2, lo[2], hi[2]);
    if rx.is_empty() || ry.is_empty() || rz.is_empty() {
        return Ok(0);
    }
    let xs: Vec<f64> = rx.map(|i| grid.center(i, 0)).collect();
    let mut count = 0;
    for k in rz {
        let z = grid.center(k, 2);
        for j in ry.clone() {
            let y = grid.center(j, 1);
            let ia = row_inside(a, y, z, &xs)?;
            let ib = row_inside(b, y, z, &xs)?;
            count += ia.iter().zip(&ib).filter(|(p, q)| **p && **q).count() as u64;
        }
    }
    Ok(count)
}

/// Volume (cm³) of the voxelised intersection of two meshes given in meters.
pub fn interpenetration_volume(a: MeshRef<'_>, b: MeshRef<'_>, voxel_cm: f64) -> Result<f64> {
    let n = shared_voxel_count(a, b, voxel_cm / 100.0)?;
    Ok(n as f64 * voxel_cm.powi(3))
}
