//! Training loop and checkpoints.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::eval::{evaluate, pool, StageReport};
use crate::hand_model::HandPair;
use crate::losses::{objective, LossReport, PreparedTruth};
use crate::network::Model;
use crate::numerics::{cosine_lr, AdamW, Graph, ParamStore};
use crate::synth::{augment, generate, PoseLimits, SceneSample};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Mean over the epoch's samples.
    pub loss: LossReport,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalLog {
    /// Number of completed epochs.
    pub epoch: usize,
    pub report: StageReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub evals: Vec<EvalLog>,
    pub wall_clock_s: f64,
}

impl TrainLog {
    /// Mean weighted loss of the last epoch.
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss.total)
    }
}

pub struct Trained {
    pub model: Model,
    pub params: ParamStore,
    pub log: TrainLog,
}

/// Train and eval scenes of a run.
#[derive(Debug, Clone)]
pub struct Data {
    pub pair: HandPair,
    pub train: Vec<SceneSample>,
    pub eval: Vec<SceneSample>,
}

pub fn templates(cfg: &RunConfig) -> Result<HandPair> {
    HandPair::build(cfg.data.template_seed, cfg.data.vertex_budget)
}

/// Generates the scenes a config describes.
pub fn build_data(cfg: &RunConfig) -> Result<Data> {
    let pair = templates(cfg)?;
    let limits = PoseLimits::anatomical();
    let d = &cfg.data;
    let (train, eval) = pool(cfg.workers)?.install(|| -> Result<_> {
        Ok((
            generate(&pair, &d.synth, &limits, d.train_seed, d.train_samples)?,
            generate(&pair, &d.synth, &limits, d.eval_seed, d.eval_samples)?,
        ))
    })?;
    Ok(Data { pair, train, eval })
}

/// splitmix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    mix(mix(mix(seed) ^ epoch as u64) ^ index as u64)
}

/// Loss report and parameter gradients of one sample.
fn sample_step(cfg: &RunConfig, model: &Model, params: &ParamStore, sample: &SceneSample) -> Result<(LossReport, Vec<Vec<f64>>)> {
    let truth = PreparedTruth::new(&model.templates, &sample.truth, cfg.net.image_size, &cfg.loss);
    let mut g = Graph::new(params, true);
    let vars = model.forward(&mut g, &sample.image)?;
    let loss = objective(&mut g.tape, &vars, &truth, cfg.net.image_size, &cfg.loss)?;
    let report = loss.report(&g.tape);
    let grads = g.tape.backward(loss.total)?;
    let mut acc: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
    g.accumulate_param_grads(&grads, &mut acc);
    Ok((report, acc))
}

pub struct Trainer<'a> {
    pub cfg: &'a RunConfig,
    pub model: Model,
    pub params: ParamStore,
    opt: AdamW,
    pub log: TrainLog,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: &'a RunConfig, pair: HandPair) -> Result<Self> {
        cfg.validate()?;
        let (model, params) = Model::new(cfg.net.clone(), pair, cfg.seed)?;
        let opt = AdamW::new(&params, cfg.optim.lr, cfg.optim.weight_decay);
        Ok(Trainer {
            cfg,
            model,
            params,
            opt,
            log: TrainLog::default(),
        })
    }

    /// One pass over `data` in a seeded order.
    pub fn epoch(&mut self, epoch: usize, data: &[SceneSample], pool: &rayon::ThreadPool) -> Result<EpochLog> {
        let start = Instant::now();
        let cfg = self.cfg;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch, usize::MAX)));
        let mut total = LossReport::default();
        for batch in order.chunks(cfg.train.batch_size) {
            let results: Vec<Result<(LossReport, Vec<Vec<f64>>)>> = pool.install(|| {
                batch
                    .par_iter()
                    .map(|&i| {
                        let aug;
                        let sample = if cfg.train.augment {
                            aug = augment(&self.model.templates, &data[i], &cfg.train.augmentation, derive_seed(cfg.seed, epoch, i))?;
                            &aug
                        } else {
                            &data[i]
                        };
                        sample_step(cfg, &self.model, &self.params, sample)
                    })
                    .collect()
            });
            let mut grads: Option<Vec<Vec<f64>>> = None;
            for r in results {
                let (rep, g) = r?;
                if !rep.total.is_finite() {
                    return Err(Error::NonFinite(format!("training loss in epoch {epoch}")));
                }
                total.add(&rep);
                match grads.as_mut() {
                    None => grads = Some(g),
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| a.iter_mut().zip(b).for_each(|(x, y)| *x += y)),
                }
            }
            let mut grads = grads.expect("non-empty batch");
            let inv = 1.0 / batch.len() as f64;
            grads.iter_mut().flatten().for_each(|v| *v *= inv);
            self.opt.step(&mut self.params, &grads, epoch, cfg.train.epochs)?;
        }
        let entry = EpochLog {
            epoch,
            lr: cosine_lr(cfg.optim.lr, epoch, cfg.train.epochs),
            loss: total.scaled(1.0 / data.len() as f64),
            seconds: start.elapsed().as_secs_f64(),
        };
        self.log.epochs.push(entry.clone());
        Ok(entry)
    }
}

/// Trains on `data.train`, evaluating on `data.eval` every
/// `train.eval_every` epochs and after the last. With `out` set, writes a
/// checkpoint there at the end and the last good one if training diverges.
pub fn train(cfg: &RunConfig, data: &Data, out: Option<&Path>, progress: &mut dyn FnMut(&EpochLog)) -> Result<Trained> {
    if data.train.is_empty() {
        return Err(Error::Data("no training samples".into()));
    }
    let start = Instant::now();
    let workers = pool(cfg.workers)?;
    let mut t = Trainer::new(cfg, data.pair.clone())?;
    for epoch in 0..cfg.train.epochs {
        let good = t.params.clone();
        match t.epoch(epoch, &data.train, &workers) {
            Ok(e) => progress(&e),
            Err(e @ Error::NonFinite(_)) => {
                if let Some(dir) = out {
                    save_checkpoint(&dir.join("last_good"), cfg, &good, &t.log)?;
                }
                return Err(e);
            }
            Err(e) => return Err(e),
        }
        let done = epoch + 1;
        let due = cfg.train.eval_every > 0 && done % cfg.train.eval_every == 0;
        if !data.eval.is_empty() && (due || done == cfg.train.epochs) {
            let report = evaluate(&t.model, &t.params, &data.eval, &cfg.eval, false, cfg.workers)?;
            t.log.evals.push(EvalLog { epoch: done, report });
        }
    }
    t.log.wall_clock_s = start.elapsed().as_secs_f64();
    if let Some(dir) = out {
        save_checkpoint(dir, cfg, &t.params, &t.log)?;
    }
    Ok(Trained {
        model: t.model,
        params: t.params,
        log: t.log,
    })
}

/// `config.json`, `params.json` + `params.bin` and `train_log.json` in `dir`.
pub fn save_checkpoint(dir: &Path, cfg: &RunConfig, params: &ParamStore, log: &TrainLog) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    cfg.save(&dir.join("config.json"))?;
    params.save(&dir.join("params"))?;
    let p = dir.join("train_log.json");
    std::fs::write(&p, serde_json::to_string_pretty(log)? + "\n").map_err(|e| Error::io(&p, e))
}

/// Rebuilds the model a checkpoint was trained with.
pub fn load_checkpoint(dir: &Path) -> Result<(RunConfig, Model, ParamStore)> {
    let cfg = RunConfig::load(&dir.join("config.json"))?;
    let (model, mut params) = Model::new(cfg.net.clone(), templates(&cfg)?, cfg.seed)?;
    let stored = ParamStore::load(&dir.join("params"))?;
    params.assign_from(&stored)?;
    Ok((cfg, model, params))
}
