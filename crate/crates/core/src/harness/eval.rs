//! Per-stage evaluation of a trained model.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hand_model::HandPair;
use crate::metrics::{EvalAccumulator, EvalConfig, EvalReport};
use crate::network::{Model, ModelOutput};
use crate::numerics::ParamStore;
use crate::synth::SceneSample;
use crate::{Error, Result};

/// Metrics of every stage; index 0 is the initial estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stages: Vec<EvalReport>,
}

impl StageReport {
    pub fn last(&self) -> &EvalReport {
        self.stages.last().expect("at least one stage")
    }

    pub fn mpjpe(&self) -> Vec<f64> {
        self.stages.iter().map(|r| r.mpjpe).collect()
    }

    /// One CSV row per stage.
    pub fn table_csv(&self) -> String {
        let mut s = String::from("stage,mpjpe_mm,mpvpe_mm,mrrpe_mm,miaa_px,auc\n");
        for (i, r) in self.stages.iter().enumerate() {
            s.push_str(&format!("{i},{},{},{},{},{}\n", r.mpjpe, r.mpvpe, r.mrrpe, r.miaa, r.pck.auc));
        }
        s
    }

    /// Human-readable stage table.
    pub fn table(&self) -> String {
        let mut s = format!("{:>5} {:>9} {:>9} {:>9} {:>8} {:>6}\n", "stage", "MPJPE", "MPVPE", "MRRPE", "MIAA", "AUC");
        for (i, r) in self.stages.iter().enumerate() {
            s.push_str(&format!(
                "{i:>5} {:>9.3} {:>9.3} {:>9.3} {:>8.3} {:>6.3}\n",
                r.mpjpe, r.mpvpe, r.mrrpe, r.miaa, r.pck.auc
            ));
        }
        if let Some(iv) = self.last().iv {
            s.push_str(&format!("IV (final stage): {iv:.4} cm^3\n"));
        }
        s
    }
}

pub(crate) fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))
}

/// Predictions for `samples`, in order.
pub fn predict_all(model: &Model, params: &ParamStore, samples: &[SceneSample], workers: usize) -> Result<Vec<ModelOutput>> {
    pool(workers)?.install(|| samples.par_iter().map(|s| model.predict(params, &s.image)).collect())
}

/// Scores predictions against the samples they came from. IV is computed
/// for the final stage only.
pub fn score(pair: &HandPair, outputs: &[ModelOutput], samples: &[SceneSample], cfg: &EvalConfig, with_iv: bool) -> Result<StageReport> {
    if outputs.len() != samples.len() || samples.is_empty() {
        return Err(Error::InvalidInput(format!("{} predictions for {} samples", outputs.len(), samples.len())));
    }
    let n_stages = outputs[0].stages.len();
    let mut acc: Vec<EvalAccumulator> = (0..n_stages)
        .map(|t| EvalAccumulator::new(cfg.clone(), with_iv && t + 1 == n_stages))
        .collect();
    for (out, s) in outputs.iter().zip(samples) {
        let gt = s.truth.state(pair);
        let gt_2d: Vec<[f64; 2]> = s.truth.left.vertices_2d().into_iter().chain(s.truth.right.vertices_2d()).collect();
        for (a, st) in acc.iter_mut().zip(&out.stages) {
            a.push(&st.state(pair), &gt, &st.vertices_2d(), &gt_2d)?;
        }
    }
    Ok(StageReport {
        stages: acc.iter().map(EvalAccumulator::finish).collect::<Result<_>>()?,
    })
}

pub fn evaluate(
    model: &Model,
    params: &ParamStore,
    samples: &[SceneSample],
    cfg: &EvalConfig,
    with_iv: bool,
    workers: usize,
) -> Result<StageReport> {
    let outputs = predict_all(model, params, samples, workers)?;
    score(&model.templates, &outputs, samples, cfg, with_iv)
}
