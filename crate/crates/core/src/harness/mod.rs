//! Configuration, training, evaluation, inference and ablations.

mod ablate;
mod check;
mod config;
mod eval;
mod infer;
mod train;

pub use ablate::{ablate, parameter_count, AblationReport, AblationRow, Switch};
pub use check::{run_checks, CheckOutcome};
pub use config::{DataConfig, OptimConfig, Profile, RunConfig, TrainConfig};
pub use eval::{evaluate, predict_all, score, StageReport};
pub use infer::{overlay, read_ppm, write_inference, write_ppm16, InferenceFiles};
pub use train::{build_data, load_checkpoint, save_checkpoint, templates, train, Data, EpochLog, EvalLog, TrainLog, Trained, Trainer};
