//! Wavefront OBJ export and import (vertices and triangles only).

use std::fmt::Write as _;
use std::path::Path;

use crate::geom::Vec3;
use crate::{Error, Result};

/// `v x y z` lines with six decimals, then 1-based `f a b c` lines.
pub fn write_obj(vertices: &[Vec3], faces: &[[usize; 3]]) -> String {
    let mut s = String::with_capacity(vertices.len() * 32 + faces.len() * 16);
    for v in vertices {
        let _ = writeln!(s, "v {:.6} {:.6} {:.6}", v[0], v[1], v[2]);
    }
    for f in faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn read_obj(text: &str) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let bad = |what: &str| Error::Data(format!("obj line {}: {what}", n + 1));
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let xs: Vec<f64> = parts
                    .map(|p| p.parse::<f64>().map_err(|_| bad("bad coordinate")))
                    .collect::<Result<_>>()?;
                if xs.len() != 3 {
                    return Err(bad("vertex needs 3 coordinates"));
                }
                vertices.push([xs[0], xs[1], xs[2]]);
            }
            Some("f") => {
                let idx: Vec<usize> = parts
                    .map(|p| {
                        let head = p.split('/').next().unwrap_or("");
                        head.parse::<usize>().ok().filter(|&i| i >= 1).ok_or_else(|| bad("bad index"))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(bad("only triangles are supported"));
                }
                faces.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
            }
            _ => {}
        }
    }
    if let Some(f) = faces.iter().flatten().find(|&&i| i >= vertices.len()) {
        return Err(Error::Data(format!("obj face index {} out of range", f + 1)));
    }
    Ok((vertices, faces))
}

pub fn save_obj(path: &Path, vertices: &[Vec3], faces: &[[usize; 3]]) -> Result<()> {
    std::fs::write(path, write_obj(vertices, faces)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hand_model::{build_template, check_closed_oriented, DEFAULT_VERTEX_BUDGET};

    #[test]
    fn round_trip_within_print_precision() {
        let t = build_template(0, DEFAULT_VERTEX_BUDGET).unwrap();
        let text = write_obj(t.vertices(), t.faces());
        assert!(text.starts_with("v "));
        assert!(text.contains("\nf "));
        let (v, f) = read_obj(&text).unwrap();
        assert_eq!(&f, t.faces().as_ref());
        for (a, b) in v.iter().zip(t.vertices()) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() <= 5e-7);
            }
        }
        check_closed_oriented(v.len(), &f).unwrap();
    }

    #[test]
    fn rejects_quads_and_bad_indices() {
        assert!(read_obj("v 0 0 0\nf 1 1 1 1\n").is_err());
        assert!(read_obj("v 0 0 0\nf 1 2 3\n").is_err());
        assert!(read_obj("v 0 0\n").is_err());
    }
}
