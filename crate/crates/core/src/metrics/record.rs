//! Line-delimited JSON exchange of per-sample predictions or references.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::PckCurve;
use crate::camera::WeakPerspective;
use crate::geom::Vec3;
use crate::hand_model::{HandMesh, TwoHandState, NUM_JOINTS};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandRecord {
    pub joints: Vec<Vec3>,
    pub vertices: Vec<Vec3>,
    pub camera: [f64; 3],
}

/// Unknown fields are ignored, so dataset record files can be read as
/// reference records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub left: HandRecord,
    pub right: HandRecord,
    pub offset: Vec3,
}

impl HandRecord {
    pub fn new(mesh: &HandMesh, camera: &WeakPerspective) -> Self {
        HandRecord {
            joints: mesh.joints.clone(),
            vertices: mesh.vertices.clone(),
            camera: camera.to_array(),
        }
    }

    fn mesh(&self, faces: &Arc<Vec<[usize; 3]>>) -> Result<HandMesh> {
        if self.joints.len() != NUM_JOINTS {
            return Err(Error::Data(format!("record has {} joints, want {NUM_JOINTS}", self.joints.len())));
        }
        if let Some(bad) = faces.iter().flatten().find(|&&i| i >= self.vertices.len()) {
            return Err(Error::Data(format!("face index {bad} out of range for {} vertices", self.vertices.len())));
        }
        Ok(HandMesh {
            vertices: self.vertices.clone(),
            joints: self.joints.clone(),
            faces: Arc::clone(faces),
        })
    }

    pub fn camera(&self) -> Result<WeakPerspective> {
        WeakPerspective::new(self.camera[0], self.camera[1], self.camera[2])
    }
}

impl SampleRecord {
    pub fn new(id: impl Into<String>, state: &TwoHandState, cams: [&WeakPerspective; 2]) -> Self {
        SampleRecord {
            id: id.into(),
            left: HandRecord::new(&state.left, cams[0]),
            right: HandRecord::new(&state.right, cams[1]),
            offset: state.offset,
        }
    }

    /// Rebuilds the two-hand state with the given face lists (left, right).
    pub fn state(&self, left_faces: &Arc<Vec<[usize; 3]>>, right_faces: &Arc<Vec<[usize; 3]>>) -> Result<TwoHandState> {
        Ok(TwoHandState {
            left: self.left.mesh(left_faces)?,
            right: self.right.mesh(right_faces)?,
            offset: self.offset,
        })
    }
}

pub fn write_records(path: &Path, records: &[SampleRecord]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<SampleRecord>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_curve_csv(path: &Path, curve: &PckCurve) -> Result<()> {
    let mut s = String::from("threshold_mm,pck\n");
    for (t, p) in curve.thresholds_mm.iter().zip(&curve.pck) {
        s.push_str(&format!("{t},{p}\n"));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
