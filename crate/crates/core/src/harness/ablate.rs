//! Architecture ablations trained under one budget and seed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::eval::StageReport;
use super::train::{train, Data, EpochLog};
use crate::network::{Model, Variant};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Switch {
    NoRefine,
    NoGcn,
    NoTransformer,
    SinglePlane,
    HeatmapPlane,
    MultiPlane,
}

impl Switch {
    pub const ALL: [Switch; 6] = [
        Switch::NoRefine,
        Switch::NoGcn,
        Switch::NoTransformer,
        Switch::SinglePlane,
        Switch::HeatmapPlane,
        Switch::MultiPlane,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Switch::NoRefine => "no-refine",
            Switch::NoGcn => "no-gcn",
            Switch::NoTransformer => "no-transformer",
            Switch::SinglePlane => "single-plane",
            Switch::HeatmapPlane => "heatmap-plane",
            Switch::MultiPlane => "multi-plane",
        }
    }

    /// `base` with only the switched part of the architecture changed.
    pub fn apply(self, base: &RunConfig) -> RunConfig {
        let mut c = base.clone();
        match self {
            Switch::NoRefine => c.net.stages = 0,
            Switch::NoGcn => c.net.variant = Variant::NoGcn,
            Switch::NoTransformer => c.net.variant = Variant::NoTransformer,
            Switch::SinglePlane => c.net.variant = Variant::SinglePlane,
            Switch::HeatmapPlane => c.net.variant = Variant::HeatmapPlane,
            Switch::MultiPlane => c.net.variant = Variant::MultiPlane,
        }
        c
    }
}

impl fmt::Display for Switch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Switch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Switch::ALL
            .into_iter()
            .find(|w| w.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown switch `{s}`; expected one of no-refine, no-gcn, no-transformer, single-plane, heatmap-plane, multi-plane")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub switch: Switch,
    pub parameters: usize,
    pub final_loss: f64,
    pub report: StageReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, s: Switch) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.switch == s)
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:<15} {:>9} {:>9} {:>9} {:>9} {:>6}\n", "variant", "params", "MPJPE", "MPVPE", "MRRPE", "AUC");
        for r in &self.rows {
            let e = r.report.last();
            s.push_str(&format!(
                "{:<15} {:>9} {:>9.3} {:>9.3} {:>9.3} {:>6.3}\n",
                r.switch.name(),
                r.parameters,
                e.mpjpe,
                e.mpvpe,
                e.mrrpe,
                e.pck.auc
            ));
        }
        s
    }
}

/// Parameter count of a switched architecture without training it.
pub fn parameter_count(base: &RunConfig, s: Switch, data: &Data) -> Result<usize> {
    let c = s.apply(base);
    Ok(Model::new(c.net, data.pair.clone(), c.seed)?.1.count())
}

/// Trains and evaluates every switch on the same data, seed and budget.
pub fn ablate(base: &RunConfig, switches: &[Switch], data: &Data, progress: &mut dyn FnMut(Switch, &EpochLog)) -> Result<AblationReport> {
    if data.eval.is_empty() {
        return Err(Error::Data("ablation needs evaluation samples".into()));
    }
    let mut rows = Vec::with_capacity(switches.len());
    for &s in switches {
        let cfg = s.apply(base);
        cfg.validate()?;
        let trained = train(&cfg, data, None, &mut |e| progress(s, e))?;
        let report = trained.log.evals.last().expect("final evaluation").report.clone();
        rows.push(AblationRow {
            switch: s,
            parameters: trained.params.count(),
            final_loss: trained.log.final_loss().unwrap_or(f64::NAN),
            report,
        });
    }
    Ok(AblationReport { rows })
}
