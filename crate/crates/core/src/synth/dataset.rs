//! Dataset directories: `manifest.json`, `records.jsonl` and `maps.bin`.
//!
//! Each record line extends the prediction record format with the pose,
//! shape and seed of every sample. `maps.bin` stores, per sample, the 3
//! image channels, 2 segmentation channels and 3 correspondence channels
//! as little-endian `u16` multiples of `1/65535`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GroundTruthSample, HandTruth, SceneSample, QUANT};
use crate::camera::WeakPerspective;
use crate::geom::Vec3;
use crate::numerics::FeatureGrid;
use crate::{Error, Result};

const FORMAT_VERSION: u32 = 1;
const CHANNELS: [&str; 8] = [
    "left_mask", "right_mask", "inverse_depth", "seg_left", "seg_right", "corr_x", "corr_y", "corr_z",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub image_size: usize,
    pub count: usize,
    pub channels: Vec<String>,
    pub template_seed: u64,
    pub vertex_budget: usize,
    pub records: String,
    pub maps: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HandLine {
    joints: Vec<Vec3>,
    vertices: Vec<Vec3>,
    camera: [f64; 3],
    pose: Vec<f64>,
    shape: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleLine {
    id: String,
    seed: u64,
    left: HandLine,
    right: HandLine,
    offset: Vec3,
}

impl HandLine {
    fn new(t: &HandTruth) -> Self {
        HandLine {
            joints: t.joints.clone(),
            vertices: t.vertices.clone(),
            camera: t.camera.to_array(),
            pose: t.pose.clone(),
            shape: t.shape.clone(),
        }
    }

    fn truth(self) -> Result<HandTruth> {
        let [s, tx, ty] = self.camera;
        Ok(HandTruth {
            pose: self.pose,
            shape: self.shape,
            camera: WeakPerspective::new(s, tx, ty)?,
            joints: self.joints,
            vertices: self.vertices,
        })
    }
}

fn encode(v: f64) -> Result<u16> {
    let q = (v * QUANT).round();
    if !(0.0..=QUANT).contains(&q) || q / QUANT != v {
        return Err(Error::Data(format!("map value {v} is not a multiple of 1/65535")));
    }
    Ok(q as u16)
}

pub fn save_dataset(dir: &Path, samples: &[SceneSample], template_seed: u64, vertex_budget: usize) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let size = samples.first().map_or(0, SceneSample::image_size);
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        image_size: size,
        count: samples.len(),
        channels: CHANNELS.iter().map(|c| c.to_string()).collect(),
        template_seed,
        vertex_budget,
        records: "records.jsonl".into(),
        maps: "maps.bin".into(),
    };
    let rec_path = dir.join(&manifest.records);
    let mut rec = BufWriter::new(File::create(&rec_path).map_err(|e| Error::io(&rec_path, e))?);
    let map_path = dir.join(&manifest.maps);
    let mut maps = BufWriter::new(File::create(&map_path).map_err(|e| Error::io(&map_path, e))?);
    for (i, s) in samples.iter().enumerate() {
        if s.image_size() != size {
            return Err(Error::Data(format!("sample {i} has size {}, expected {size}", s.image_size())));
        }
        let line = SampleLine {
            id: format!("{i:06}"),
            seed: s.seed,
            left: HandLine::new(&s.truth.left),
            right: HandLine::new(&s.truth.right),
            offset: s.truth.offset,
        };
        serde_json::to_writer(&mut rec, &line)?;
        rec.write_all(b"\n").map_err(|e| Error::io(&rec_path, e))?;
        for v in s.image.data.iter().chain(&s.truth.seg.data).chain(&s.truth.corr.data) {
            maps.write_all(&encode(*v)?.to_le_bytes()).map_err(|e| Error::io(&map_path, e))?;
        }
    }
    rec.flush().map_err(|e| Error::io(&rec_path, e))?;
    maps.flush().map_err(|e| Error::io(&map_path, e))?;
    let man_path = dir.join("manifest.json");
    std::fs::write(&man_path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&man_path, e))?;
    Ok(manifest)
}

pub fn load_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<SceneSample>)> {
    let man_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&man_path).map_err(|e| Error::io(&man_path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Data(format!("unsupported dataset version {}", manifest.format_version)));
    }
    if manifest.channels.len() != CHANNELS.len() {
        return Err(Error::Data("unexpected channel list".into()));
    }
    let size = manifest.image_size;
    let per = size * size;
    let rec_path = dir.join(&manifest.records);
    let rec = BufReader::new(File::open(&rec_path).map_err(|e| Error::io(&rec_path, e))?);
    let map_path = dir.join(&manifest.maps);
    let mut raw = Vec::new();
    File::open(&map_path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| Error::io(&map_path, e))?;
    if raw.len() != manifest.count * CHANNELS.len() * per * 2 {
        return Err(Error::Data(format!("{}: {} bytes, expected {}", map_path.display(), raw.len(), manifest.count * CHANNELS.len() * per * 2)));
    }
    let mut values = raw.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]]) as f64 / QUANT);
    let mut grid = |c: usize| FeatureGrid::new(c, size, size, values.by_ref().take(c * per).collect());
    let mut samples = Vec::with_capacity(manifest.count);
    for (i, line) in rec.lines().enumerate() {
        let line = line.map_err(|e| Error::io(&rec_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let l: SampleLine = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", rec_path.display(), i + 1)))?;
        let image = grid(3)?;
        let seg = grid(2)?;
        let corr = grid(3)?;
        samples.push(SceneSample {
            seed: l.seed,
            image,
            truth: GroundTruthSample {
                left: l.left.truth()?,
                right: l.right.truth()?,
                offset: l.offset,
                seg,
                corr,
            },
        });
    }
    if samples.len() != manifest.count {
        return Err(Error::Data(format!("manifest lists {} samples, found {}", manifest.count, samples.len())));
    }
    Ok((manifest, samples))
}
