//! Orthographic z-buffer triangle rasterizer.

use crate::geom::Vec3;

/// One triangle mesh already mapped to pixel coordinates.
///
/// `points[i] = (u, v, depth)`; smaller depth is nearer. `attributes` holds
/// one vector per vertex that is interpolated barycentrically.
#[derive(Debug, Clone, Copy)]
pub struct RasterMesh<'a> {
    pub points: &'a [Vec3],
    pub faces: &'a [[usize; 3]],
    pub attributes: &'a [Vec3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fragments {
    pub height: usize,
    pub width: usize,
    /// Index of the mesh covering each pixel.
    pub label: Vec<Option<usize>>,
    pub depth: Vec<f64>,
    pub attribute: Vec<Vec3>,
}

impl Fragments {
    pub fn coverage(&self, mesh: usize) -> usize {
        self.label.iter().filter(|l| **l == Some(mesh)).count()
    }
}

/// Pixel `(x, y)` is sampled at its centre `(x + 0.5, y + 0.5)`. Both
/// windings are filled; pixels on an edge count as covered. Ties in depth
/// keep the earlier mesh and face.
pub fn rasterize(meshes: &[RasterMesh<'_>], height: usize, width: usize) -> Fragments {
    let n = height * width;
    let mut out = Fragments {
        height,
        width,
        label: vec![None; n],
        depth: vec![f64::INFINITY; n],
        attribute: vec![[0.0; 3]; n],
    };
    for (m, mesh) in meshes.iter().enumerate() {
        for f in mesh.faces {
            let [a, b, c] = f.map(|i| mesh.points[i]);
            let area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
            if area == 0.0 || !area.is_finite() {
                continue;
            }
            let lo_x = a[0].min(b[0]).min(c[0]);
            let hi_x = a[0].max(b[0]).max(c[0]);
            let lo_y = a[1].min(b[1]).min(c[1]);
            let hi_y = a[1].max(b[1]).max(c[1]);
            let x0 = ((lo_x - 0.5).ceil().max(0.0)) as usize;
            let y0 = ((lo_y - 0.5).ceil().max(0.0)) as usize;
            if hi_x < 0.5 || hi_y < 0.5 {
                continue;
            }
            let x1 = ((hi_x - 0.5).floor() as usize).min(width.saturating_sub(1));
            let y1 = ((hi_y - 0.5).floor() as usize).min(height.saturating_sub(1));
            for y in y0..=y1 {
                let py = y as f64 + 0.5;
                for x in x0..=x1 {
                    let px = x as f64 + 0.5;
                    let w0 = ((b[0] - px) * (c[1] - py) - (b[1] - py) * (c[0] - px)) / area;
                    let w1 = ((c[0] - px) * (a[1] - py) - (c[1] - py) * (a[0] - px)) / area;
                    let w2 = 1.0 - w0 - w1;
                    if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                        continue;
                    }
                    let z = a[2] + w1 * (b[2] - a[2]) + w2 * (c[2] - a[2]);
                    let i = y * width + x;
                    if z < out.depth[i] {
                        out.depth[i] = z;
                        out.label[i] = Some(m);
                        let [ta, tb, tc] = f.map(|v| mesh.attributes[v]);
                        out.attribute[i] = [0, 1, 2].map(|k| ta[k] + w1 * (tb[k] - ta[k]) + w2 * (tc[k] - ta[k]));
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_scene_is_blank() {
        let f = rasterize(&[], 4, 5);
        assert!(f.label.iter().all(Option::is_none));
        assert_eq!(f.label.len(), 20);
    }

    #[test]
    fn small_triangle_covers_one_pixel() {
        let pts = [[2.3, 1.3, 0.25], [2.9, 1.4, 0.25], [2.4, 1.9, 0.25]];
        let attr = [[1.0, 0.0, 0.0]; 3];
        let mesh = RasterMesh { points: &pts, faces: &[[0, 1, 2]], attributes: &attr };
        let f = rasterize(&[mesh], 4, 4);
        assert_eq!(f.coverage(0), 1);
        let i = 4 + 2;
        assert_eq!(f.label[i], Some(0));
        assert_eq!(f.depth[i], 0.25);
        let mut flipped = pts;
        flipped.swap(1, 2);
        let back = RasterMesh { points: &flipped, faces: &[[0, 1, 2]], attributes: &attr };
        assert_eq!(rasterize(&[back], 4, 4).coverage(0), 1);
    }

    #[test]
    fn nearer_mesh_wins() {
        let far = [[0.0, 0.0, 1.0], [8.0, 0.0, 1.0], [0.0, 8.0, 1.0]];
        let near = [[0.0, 0.0, 0.5], [8.0, 0.0, 0.5], [0.0, 8.0, 0.5]];
        let attr = [[0.0; 3]; 3];
        let faces = [[0, 1, 2]];
        let a = RasterMesh { points: &far, faces: &faces, attributes: &attr };
        let b = RasterMesh { points: &near, faces: &faces, attributes: &attr };
        let f = rasterize(&[a, b], 8, 8);
        assert_eq!(f.coverage(0), 0);
        assert!(f.coverage(1) > 0);
        assert_eq!(f.depth[0], 0.5);
    }

    #[test]
    fn attributes_interpolate() {
        let pts = [[0.0, 0.0, 0.0], [4.0, 0.0, 0.0], [0.0, 4.0, 0.0]];
        let attr = [[0.0, 0.0, 0.0], [4.0, 0.0, 0.0], [0.0, 4.0, 0.0]];
        let mesh = RasterMesh { points: &pts, faces: &[[0, 1, 2]], attributes: &attr };
        let f = rasterize(&[mesh], 4, 4);
        let a = f.attribute[4 + 1];
        assert!((a[0] - 1.5).abs() < 1e-12 && (a[1] - 1.5).abs() < 1e-12);
    }
}
