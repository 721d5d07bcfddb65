//! Named parameter storage, per-pass binding onto a tape, and checkpoints.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tape::{Grads, Tape, Var};
use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    /// Position in insertion order.
    pub fn index(self) -> usize {
        self.0
    }

    pub fn from_index(i: usize) -> Self {
        ParamId(i)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter name {name}"
        );
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(value);
        ParamId(self.names.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub(crate) fn tensor_mut_by_index(&mut self, i: usize) -> &mut Tensor {
        &mut self.tensors[i]
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Writes `<stem>.json` (manifest) and `<stem>.bin` (little-endian f64 blob).
    pub fn save(&self, stem: &Path) -> Result<()> {
        let mut blob = Vec::with_capacity(self.count() * 8);
        let mut entries = Vec::with_capacity(self.len());
        for (name, t) in self.iter() {
            entries.push(ManifestEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                dtype: "f64".into(),
                offset: blob.len() as u64,
                bytes: (t.len() * 8) as u64,
            });
            for v in t.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let blob_path = stem.with_extension("bin");
        let manifest = Manifest {
            format: "handrefine-checkpoint/1".into(),
            blob: blob_path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            params: entries,
        };
        if let Some(dir) = stem.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
        }
        fs::write(&blob_path, &blob).map_err(|e| Error::io(&blob_path, e))?;
        let mpath = stem.with_extension("json");
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;
        Ok(())
    }

    /// Reads a checkpoint written by [`ParamStore::save`].
    pub fn load(stem: &Path) -> Result<Self> {
        let mpath = stem.with_extension("json");
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let blob_path = mpath.with_file_name(&manifest.blob);
        let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
        let mut store = ParamStore::new();
        for e in manifest.params {
            if e.dtype != "f64" {
                return Err(Error::Checkpoint(format!("`{}` has dtype {}", e.name, e.dtype)));
            }
            let n: usize = e.shape.iter().product();
            if e.bytes as usize != n * 8 {
                return Err(Error::Checkpoint(format!("`{}` byte length", e.name)));
            }
            let start = e.offset as usize;
            let bytes = blob
                .get(start..start + n * 8)
                .ok_or_else(|| Error::Checkpoint(format!("`{}` runs past the blob", e.name)))?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            store.add(e.name, Tensor::new(e.shape, data)?);
        }
        Ok(store)
    }

    /// Copies values from `other`, requiring identical names and shapes.
    pub fn assign_from(&mut self, other: &ParamStore) -> Result<()> {
        for (name, t) in other.iter() {
            let id = self
                .id(name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected parameter `{name}`")))?;
            let dst = &mut self.tensors[id.0];
            if dst.shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, model expects {:?}",
                    t.shape(),
                    dst.shape()
                )));
            }
            *dst = t.clone();
        }
        if let Some(missing) = self.names.iter().find(|n| other.id(n).is_none()) {
            return Err(Error::Checkpoint(format!("missing parameter `{missing}`")));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    blob: String,
    params: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
    bytes: u64,
}

/// One forward pass: a fresh tape plus lazily bound parameter leaves.
pub struct Graph<'p> {
    pub tape: Tape,
    params: &'p ParamStore,
    bound: Vec<Option<Var>>,
    trainable: bool,
}

impl<'p> Graph<'p> {
    /// `trainable = false` records parameters as constants (inference).
    pub fn new(params: &'p ParamStore, trainable: bool) -> Self {
        Graph {
            tape: Tape::new(),
            params,
            bound: vec![None; params.len()],
            trainable,
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn p(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.tape.leaf(self.params.get(id).clone(), self.trainable);
        self.bound[id.0] = Some(v);
        v
    }

    /// Gradients for every parameter, zeros for unused ones.
    pub fn param_grads(&self, grads: &Grads) -> Vec<Vec<f64>> {
        self.bound
            .iter()
            .enumerate()
            .map(|(i, b)| match b {
                Some(v) => grads.get_or_zeros(*v),
                None => vec![0.0; self.params.get(ParamId(i)).len()],
            })
            .collect()
    }

    /// Adds this pass's parameter gradients into `acc`, one buffer per
    /// parameter.
    pub fn accumulate_param_grads(&self, grads: &Grads, acc: &mut [Vec<f64>]) {
        for (b, a) in self.bound.iter().zip(acc.iter_mut()) {
            if let Some(g) = b.and_then(|v| grads.get(v)) {
                a.iter_mut().zip(g).for_each(|(x, y)| *x += y);
            }
        }
    }

    /// Whether each parameter received any nonzero gradient.
    pub fn touched(&self, grads: &Grads) -> Vec<bool> {
        self.bound
            .iter()
            .map(|b| {
                b.and_then(|v| grads.get(v))
                    .map(|g| g.iter().any(|x| *x != 0.0))
                    .unwrap_or(false)
            })
            .collect()
    }
}
