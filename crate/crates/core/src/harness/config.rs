//! Run configuration: one JSON document whose `profile` field selects the
//! defaults that every other field overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::hand_model::DEFAULT_VERTEX_BUDGET;
use crate::losses::LossWeights;
use crate::metrics::EvalConfig;
use crate::network::{NetConfig, Variant};
use crate::synth::{AugmentationSpec, SynthConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// 64 px, small widths; trains on a CPU in minutes.
    Desk,
    /// 256 px with the published widths and schedule.
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimConfig {
    pub lr: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub augment: bool,
    pub augmentation: AugmentationSpec,
    /// Evaluate every this many epochs; 0 evaluates only at the end.
    pub eval_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub template_seed: u64,
    pub vertex_budget: usize,
    /// Scene `i` uses seed `train_seed + i`; keep the two ranges disjoint.
    pub train_seed: u64,
    pub eval_seed: u64,
    pub train_samples: usize,
    pub eval_samples: usize,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    /// Seeds initialisation, batch order and augmentation.
    pub seed: u64,
    /// Worker threads for data generation, gradients and evaluation.
    pub workers: usize,
    pub net: NetConfig,
    pub loss: LossWeights,
    pub optim: OptimConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn desk() -> Self {
        RunConfig {
            profile: Profile::Desk,
            seed: 0,
            workers: 1,
            net: NetConfig::default(),
            loss: LossWeights::default(),
            optim: OptimConfig {
                lr: 1e-3,
                weight_decay: 1e-4,
            },
            train: TrainConfig {
                epochs: 30,
                batch_size: 16,
                augment: true,
                augmentation: AugmentationSpec::default(),
                eval_every: 0,
            },
            data: DataConfig {
                template_seed: 0,
                vertex_budget: DEFAULT_VERTEX_BUDGET,
                train_seed: 0,
                eval_seed: 1 << 32,
                train_samples: 2000,
                eval_samples: 500,
                synth: SynthConfig::default(),
            },
            eval: EvalConfig::default(),
        }
    }

    pub fn paper() -> Self {
        let mut c = RunConfig::desk();
        c.profile = Profile::Paper;
        c.net = NetConfig {
            image_size: 256,
            encoder_widths: [64, 128, 256, 256],
            channels: 256,
            joint_channels: 128,
            gcn_depth: 4,
            transformer_depth: 4,
            heads: 4,
            ff_expansion: 2,
            stages: 2,
            variant: Variant::MultiPlane,
            heatmap_sigma: 4.0,
        };
        c.optim.lr = 3e-4;
        c.train.epochs = 50;
        c.train.batch_size = 64;
        c.data.synth.image_size = 256;
        c.data.train_samples = 50_000;
        c.data.eval_samples = 5_000;
        c
    }

    pub fn for_profile(p: Profile) -> Self {
        match p {
            Profile::Desk => RunConfig::desk(),
            Profile::Paper => RunConfig::paper(),
        }
    }

    /// Parses a document whose fields override the defaults of its
    /// `profile` (desk when absent).
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))?;
        if !doc.is_object() {
            return Err(Error::config("<document>", "expected a JSON object"));
        }
        let profile = match doc.get("profile") {
            None => Profile::Desk,
            Some(p) => serde_json::from_value(p.clone()).map_err(|e| Error::config("profile", e.to_string()))?,
        };
        let mut base = serde_json::to_value(RunConfig::for_profile(profile))?;
        merge(&mut base, &doc, "")?;
        let cfg: RunConfig = serde_json::from_value(base).map_err(|e| Error::config("<document>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.loss.validate()?;
        self.eval.validate()?;
        self.data.synth.validate()?;
        self.train.augmentation.validate()?;
        if self.data.synth.image_size != self.net.image_size {
            return Err(Error::config("data.synth.image_size", "must equal net.image_size"));
        }
        if !(self.optim.lr >= 0.0 && self.optim.lr.is_finite()) {
            return Err(Error::config("optim.lr", "must be finite and >= 0"));
        }
        if !(self.optim.weight_decay >= 0.0 && self.optim.weight_decay.is_finite()) {
            return Err(Error::config("optim.weight_decay", "must be finite and >= 0"));
        }
        if self.train.epochs == 0 {
            return Err(Error::config("train.epochs", "must be at least 1"));
        }
        if self.train.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if self.data.train_samples == 0 {
            return Err(Error::config("data.train_samples", "must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers", "must be at least 1"));
        }
        if self.data.vertex_budget < crate::hand_model::MIN_VERTEX_BUDGET {
            return Err(Error::config("data.vertex_budget", "below the minimum template size"));
        }
        Ok(())
    }
}

/// Overlays `patch` onto `base`, rejecting keys `base` does not have.
fn merge(base: &mut Value, patch: &Value, path: &str) -> Result<()> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v, &here)?,
                    Some(slot) => *slot = v.clone(),
                    None => return Err(Error::config(here, "unknown field")),
                }
            }
            Ok(())
        }
        (b, p) => {
            *b = p.clone();
            Ok(())
        }
    }
}
