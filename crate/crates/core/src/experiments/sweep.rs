use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{SourceMode, SourceSpec};

use super::config::{ExperimentConfig, Pipeline};
use super::report::{write_summary, SummaryRow};
use super::trainer::{run_training, steps_to_threshold, TrainingOutcome};

/// Purity a run must reach to count as converged.
pub const PURITY_THRESHOLD: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Beta,
    Separation,
    /// Values: `standard`, `two-stage`, `joint-ema`, `vae`.
    Pipeline,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta" => Ok(Self::Beta),
            "separation" => Ok(Self::Separation),
            "pipeline" => Ok(Self::Pipeline),
            _ => Err(Error::Config(format!("unknown sweep axis {s:?}"))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Beta => "beta",
            Self::Separation => "separation",
            Self::Pipeline => "pipeline",
        })
    }
}

fn number(axis: SweepAxis, value: &str) -> Result<f64> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{axis} value {value:?} is not a number")))
}

/// Cocos spec for sweeps that switch a standard base run to Cocos.
fn cocos_of(base: &SourceSpec) -> SourceSpec {
    match base.mode {
        SourceMode::Standard => SourceSpec::cocos(1.0, 0.2),
        _ => SourceSpec::cocos(base.alpha, base.beta),
    }
}

/// The base config with one axis set to `value`.
pub fn apply_axis(
    base: &ExperimentConfig,
    axis: SweepAxis,
    value: &str,
) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::Beta => {
            if cfg.source.mode == SourceMode::Standard {
                cfg.source = cocos_of(&cfg.source);
            }
            cfg.source.beta = number(axis, value)?;
        }
        SweepAxis::Separation => cfg.conditions.separation = number(axis, value)?,
        SweepAxis::Pipeline => match value.trim() {
            "standard" => cfg.source = SourceSpec::standard(),
            "two-stage" => {
                cfg.source = cocos_of(&base.source);
                cfg.training.pipeline = Pipeline::TwoStage;
            }
            "joint-ema" => {
                cfg.source = cocos_of(&base.source);
                cfg.training.pipeline = Pipeline::JointEma;
            }
            "vae" => {
                cfg.source = SourceSpec::cocos_vae(cocos_of(&base.source).alpha);
                cfg.training.pipeline = Pipeline::TwoStage;
            }
            other => return Err(Error::Config(format!("unknown pipeline {other:?}"))),
        },
    }
    if let Some(out) = &base.output {
        cfg.output = Some(out.join(format!("{axis}-{}", value.trim())));
    }
    cfg.validate()?;
    Ok(cfg)
}

/// One sweep run; failed runs carry their error and no metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub error: Option<String>,
    pub final_purity: Option<f64>,
    pub steps_to_threshold: Option<usize>,
    pub cosine_metric: Option<f64>,
    pub norm_scale_metric: Option<f64>,
    pub final_loss: Option<f64>,
    pub summary: Option<SummaryRow>,
}

impl SweepRow {
    fn from_outcome(label: String, outcome: &Result<TrainingOutcome>) -> Self {
        match outcome {
            Ok(o) => {
                let last = o.metrics.last();
                let resp = last.and_then(|r| r.responsiveness.as_ref());
                Self {
                    final_purity: last.map(|r| r.collapse.mean_purity),
                    steps_to_threshold: steps_to_threshold(&o.metrics, PURITY_THRESHOLD),
                    cosine_metric: resp.map(|r| r.cosine_metric),
                    norm_scale_metric: resp.map(|r| r.norm_scale_metric),
                    final_loss: last.map(|r| r.loss),
                    summary: last.map(|r| SummaryRow::from_record(label.clone(), r)),
                    label,
                    error: None,
                }
            }
            Err(e) => Self {
                label,
                error: Some(e.to_string()),
                final_purity: None,
                steps_to_threshold: None,
                cosine_metric: None,
                norm_scale_metric: None,
                final_loss: None,
                summary: None,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// Side-by-side text table of the sweep.
    pub fn table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("-".into(), |x| format!("{x:.4}"));
        let mut out = format!(
            "{:<16} {:>8} {:>10} {:>10} {:>10} {:>10}  status\n",
            self.axis, "purity", "steps@0.9", "cosine", "normscale", "loss"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<16} {:>8} {:>10} {:>10} {:>10} {:>10}  {}\n",
                r.label,
                fmt(r.final_purity),
                r.steps_to_threshold.map_or("-".into(), |s| s.to_string()),
                fmt(r.cosine_metric),
                fmt(r.norm_scale_metric),
                fmt(r.final_loss),
                r.error.as_deref().unwrap_or("ok"),
            ));
        }
        out
    }
}

/// Trains one run per value, in parallel, sharing the base seed. A failing
/// run is recorded in its row and does not stop the others.
pub fn run_sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[String],
) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let rows: Vec<SweepRow> = values
        .par_iter()
        .map(|v| {
            let label = format!("{axis}={}", v.trim());
            let outcome = apply_axis(base, axis, v).and_then(run_training);
            SweepRow::from_outcome(label, &outcome)
        })
        .collect();
    let report = SweepReport { axis, rows };
    if let Some(dir) = &base.output {
        write_sweep(&report, dir)?;
    }
    Ok(report)
}

fn write_sweep(report: &SweepReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rows: Vec<SummaryRow> = report
        .rows
        .iter()
        .filter_map(|r| r.summary.clone())
        .collect();
    write_summary(&rows, &dir.join("summary.csv"))?;
    let path = dir.join("sweep.json");
    std::fs::write(
        &path,
        serde_json::to_string_pretty(report).expect("sweep serializes"),
    )
    .map_err(|e| Error::io(&path, e))?;
    let path = dir.join("sweep.txt");
    std::fs::write(&path, report.table()).map_err(|e| Error::io(&path, e))
}
