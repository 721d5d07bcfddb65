use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use handrefine::harness::{
    ablate, build_data, evaluate, load_checkpoint, read_ppm, run_checks, templates, train, write_inference, Data,
    RunConfig, Switch,
};
use handrefine::synth::{generate, load_dataset, sample_scene, save_dataset, PoseLimits};
use handrefine::{Error, Result};

/// Two-hand mesh reconstruction by decoupled iterative refinement.
#[derive(Parser)]
#[command(name = "handrefine", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Directory written by `gen-data` instead of generating scenes.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Evaluate a checkpoint per refinement stage.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluation set written by `gen-data` (its `eval` split).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Also compute the interpenetration volume of the final stage.
        #[arg(long)]
        iv: bool,
        #[arg(long, env = "HANDREFINE_WORKERS")]
        workers: Option<usize>,
        #[arg(long, env = "HANDREFINE_OUT")]
        out: Option<PathBuf>,
    },
    /// Reconstruct both hands from one image and export meshes.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Binary PPM (P6) of the configured size.
        #[arg(long, conflicts_with = "sample", required_unless_present = "sample")]
        image: Option<PathBuf>,
        /// Index into the checkpoint's evaluation scenes.
        #[arg(long)]
        sample: Option<u64>,
        #[arg(long, env = "HANDREFINE_OUT", default_value = "infer")]
        out: PathBuf,
    },
    /// Train and compare architecture switches under one budget and seed.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated: no-refine, no-gcn, no-transformer, single-plane, heatmap-plane, multi-plane.
        #[arg(long, value_delimiter = ',', default_value = "multi-plane,single-plane,heatmap-plane")]
        switches: Vec<String>,
    },
    /// Generate the train and eval scenes of a config.
    GenData {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the fast invariant suite.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON run config; omitted fields take the profile defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "HANDREFINE_WORKERS")]
    workers: Option<usize>,
    #[arg(long, env = "HANDREFINE_OUT", default_value = "run")]
    out: PathBuf,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::desk(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> (u8, &'static str) {
    match e {
        Error::Config { .. } | Error::InvalidInput(_) => (2, "config"),
        Error::Data(_) | Error::Io { .. } | Error::Json(_) | Error::Checkpoint(_) | Error::Mesh(_) => (3, "data"),
        Error::NonFinite(_) | Error::Shape { .. } | Error::Metric(_) => (4, "numeric"),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn load_split(cfg: &RunConfig, dir: &Path) -> Result<Vec<handrefine::synth::SceneSample>> {
    let (manifest, samples) = load_dataset(dir)?;
    if manifest.template_seed != cfg.data.template_seed || manifest.vertex_budget != cfg.data.vertex_budget {
        return Err(Error::Data(format!(
            "{}: built for template seed {} / budget {}, config has {} / {}",
            dir.display(),
            manifest.template_seed,
            manifest.vertex_budget,
            cfg.data.template_seed,
            cfg.data.vertex_budget
        )));
    }
    if manifest.image_size != cfg.net.image_size {
        return Err(Error::Data(format!(
            "{}: images are {} px, model expects {}",
            dir.display(),
            manifest.image_size,
            cfg.net.image_size
        )));
    }
    Ok(samples)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { run, data } => {
            let cfg = run.config()?;
            let data = match data {
                Some(d) => Data {
                    pair: templates(&cfg)?,
                    train: load_split(&cfg, &d.join("train"))?,
                    eval: load_split(&cfg, &d.join("eval"))?,
                },
                None => build_data(&cfg)?,
            };
            let trained = train(&cfg, &data, Some(&run.out), &mut |e| {
                eprintln!("epoch {:>3}  lr {:.3e}  loss {:.6}  ({:.1}s)", e.epoch, e.lr, e.loss.total, e.seconds);
            })?;
            if let Some(ev) = trained.log.evals.last() {
                print!("{}", ev.report.table());
            }
            println!("checkpoint: {}", run.out.display());
        }
        Command::Eval {
            checkpoint,
            data,
            iv,
            workers,
            out,
        } => {
            let (mut cfg, model, params) = load_checkpoint(&checkpoint)?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let samples = match data {
                Some(d) => load_split(&cfg, &d.join("eval"))?,
                None => {
                    let d = &cfg.data;
                    generate(&model.templates, &d.synth, &PoseLimits::anatomical(), d.eval_seed, d.eval_samples)?
                }
            };
            let report = evaluate(&model, &params, &samples, &cfg.eval, iv, cfg.workers)?;
            print!("{}", report.table());
            if let Some(out) = out {
                create_dir(&out)?;
                write(&out.join("stages.csv"), &report.table_csv())?;
                let pck = &report.last().pck;
                let mut csv = String::from("threshold_mm,pck\n");
                for (t, p) in pck.thresholds_mm.iter().zip(&pck.pck) {
                    csv.push_str(&format!("{t},{p}\n"));
                }
                write(&out.join("pck.csv"), &csv)?;
                write(&out.join("report.json"), &(serde_json::to_string_pretty(&report.stages)? + "\n"))?;
            }
        }
        Command::Infer {
            checkpoint,
            image,
            sample,
            out,
        } => {
            let (cfg, model, params) = load_checkpoint(&checkpoint)?;
            let (id, image) = match (image, sample) {
                (Some(p), _) => {
                    let bytes = std::fs::read(&p).map_err(|e| Error::Io {
                        path: p.clone(),
                        source: e,
                    })?;
                    (p.display().to_string(), read_ppm(&bytes)?)
                }
                (None, Some(i)) => {
                    let d = &cfg.data;
                    let s = sample_scene(&model.templates, &d.synth, &PoseLimits::anatomical(), d.eval_seed + i)?;
                    (format!("eval-{i}"), s.image)
                }
                (None, None) => return Err(Error::InvalidInput("need --image or --sample".into())),
            };
            let (_, files) = write_inference(&model, &params, &image, &id, &out)?;
            for p in [files.left_obj, files.right_obj, files.overlay, files.record] {
                println!("{}", p.display());
            }
        }
        Command::Ablate { run, switches } => {
            let cfg = run.config()?;
            let switches = switches.iter().map(|s| s.parse::<Switch>()).collect::<Result<Vec<_>>>()?;
            let data = build_data(&cfg)?;
            let report = ablate(&cfg, &switches, &data, &mut |s, e| {
                eprintln!("{s:<15} epoch {:>3}  loss {:.6}", e.epoch, e.loss.total);
            })?;
            print!("{}", report.table());
            create_dir(&run.out)?;
            write(&run.out.join("ablation.txt"), &report.table())?;
            write(&run.out.join("ablation.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
        }
        Command::GenData { run } => {
            let cfg = run.config()?;
            let data = build_data(&cfg)?;
            for (name, split) in [("train", &data.train), ("eval", &data.eval)] {
                let m = save_dataset(&run.out.join(name), split, cfg.data.template_seed, cfg.data.vertex_budget)?;
                println!("{name}: {} scenes, {} px", m.count, m.image_size);
            }
            cfg.save(&run.out.join("config.json"))?;
        }
        Command::Check { seed } => {
            let outcomes = run_checks(seed);
            let failed: Vec<_> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
            for o in &outcomes {
                println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
            }
            if !failed.is_empty() {
                return Err(Error::NonFinite(format!("invariant checks failed: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = exit_code(&e);
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{kind}] code={code}: {msg}");
            ExitCode::from(code)
        }
    }
}
