//! Single-image inference and its file outputs.

use std::path::{Path, PathBuf};

use crate::hand_model::{save_obj, Handedness};
use crate::metrics::{write_records, SampleRecord};
use crate::network::{Model, ModelOutput};
use crate::numerics::{FeatureGrid, ParamStore};
use crate::{Error, Result};

/// Reads a binary portable pixmap (`P6`, maxval up to 65535) as a
/// `[3, H, W]` grid in `[0, 1]`.
pub fn read_ppm(bytes: &[u8]) -> Result<FeatureGrid> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if bytes.get(pos) == Some(&b'#') {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Data("ppm: truncated header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P6" {
        return Err(Error::Data(format!("ppm: expected P6, got {}", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Data(format!("ppm: bad header field `{s}`")));
    let (w, h, max) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if max == 0 || max > 65535 {
        return Err(Error::Data(format!("ppm: maxval {max}")));
    }
    let bps = if max < 256 { 1 } else { 2 };
    let body = bytes.get(pos..).unwrap_or_default();
    if body.len() < w * h * 3 * bps {
        return Err(Error::Data("ppm: pixel data truncated".into()));
    }
    let mut grid = FeatureGrid::zeros(3, h, w);
    for i in 0..w * h {
        for c in 0..3 {
            let k = (i * 3 + c) * bps;
            let v = if bps == 1 { body[k] as usize } else { (body[k] as usize) << 8 | body[k + 1] as usize };
            grid.data[c * w * h + i] = v as f64 / max as f64;
        }
    }
    Ok(grid)
}

/// Writes channels 0..3 of `grid` as a 16-bit `P6` pixmap.
pub fn write_ppm16(grid: &FeatureGrid) -> Vec<u8> {
    let (h, w) = (grid.height, grid.width);
    let mut out = format!("P6\n{w} {h}\n65535\n").into_bytes();
    for i in 0..w * h {
        for c in 0..3 {
            let v = if c < grid.channels { grid.data[c * w * h + i] } else { 0.0 };
            let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
            out.extend_from_slice(&q.to_be_bytes());
        }
    }
    out
}

/// 8-bit pixmap of the input masks in gray with projected vertices drawn on
/// top: left hand red, right hand green.
pub fn overlay(image: &FeatureGrid, out: &ModelOutput) -> Vec<u8> {
    let (h, w) = (image.height, image.width);
    let mut rgb = vec![0u8; w * h * 3];
    for i in 0..w * h {
        let m = (image.data[i] + image.data[w * h + i]).min(1.0);
        let g = (m * 96.0) as u8;
        rgb[3 * i..3 * i + 3].copy_from_slice(&[g, g, g]);
    }
    let last = out.last();
    for (hand, color) in [(&last.left, [255, 64, 64]), (&last.right, [64, 255, 64])] {
        for p in &hand.vertices_2d {
            let (x, y) = (p[0].floor(), p[1].floor());
            if x >= 0.0 && y >= 0.0 && (x as usize) < w && (y as usize) < h {
                let i = y as usize * w + x as usize;
                rgb[3 * i..3 * i + 3].copy_from_slice(&color);
            }
        }
    }
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    bytes.extend_from_slice(&rgb);
    bytes
}

/// Files written by [`write_inference`].
#[derive(Debug, Clone)]
pub struct InferenceFiles {
    pub left_obj: PathBuf,
    pub right_obj: PathBuf,
    pub overlay: PathBuf,
    pub record: PathBuf,
}

/// Predicts `image` and writes `left.obj`, `right.obj`, `overlay.ppm` and
/// `prediction.jsonl` (one record) into `dir`.
pub fn write_inference(
    model: &Model,
    params: &ParamStore,
    image: &FeatureGrid,
    id: &str,
    dir: &Path,
) -> Result<(SampleRecord, InferenceFiles)> {
    let out = model.predict(params, image)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let record = out.last().to_record(id, &model.templates);
    let files = InferenceFiles {
        left_obj: dir.join("left.obj"),
        right_obj: dir.join("right.obj"),
        overlay: dir.join("overlay.ppm"),
        record: dir.join("prediction.jsonl"),
    };
    let faces = |h: Handedness| model.templates.get(h).faces().clone();
    save_obj(&files.left_obj, &record.left.vertices, &faces(Handedness::Left))?;
    save_obj(&files.right_obj, &record.right.vertices, &faces(Handedness::Right))?;
    std::fs::write(&files.overlay, overlay(image, &out)).map_err(|e| Error::io(&files.overlay, e))?;
    write_records(&files.record, std::slice::from_ref(&record))?;
    Ok((record, files))
}
