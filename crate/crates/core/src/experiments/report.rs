use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::trainer::MetricsRecord;

/// Columns of `summary.csv`, in order.
pub const SUMMARY_HEADER: [&str; 12] = [
    "run",
    "step",
    "loss",
    "mean_purity",
    "min_purity",
    "divergence",
    "v_star_gap",
    "cosine_metric",
    "norm_scale_metric",
    "grad_difference",
    "success_rate",
    "wall_time",
];

/// One row of `summary.csv`. Missing diagnostics are empty cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub run: String,
    pub step: usize,
    pub loss: f64,
    pub mean_purity: f64,
    pub min_purity: f64,
    pub divergence: f64,
    pub v_star_gap: Option<f64>,
    pub cosine_metric: Option<f64>,
    pub norm_scale_metric: Option<f64>,
    pub grad_difference: Option<f64>,
    pub success_rate: Option<f64>,
    pub wall_time: f64,
}

impl SummaryRow {
    pub fn from_record(run: impl Into<String>, r: &MetricsRecord) -> Self {
        Self {
            run: run.into(),
            step: r.step,
            loss: r.loss,
            mean_purity: r.collapse.mean_purity,
            min_purity: r
                .collapse
                .purity
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min),
            divergence: r.collapse.divergence,
            v_star_gap: r.v_star_gap,
            cosine_metric: r.responsiveness.as_ref().map(|x| x.cosine_metric),
            norm_scale_metric: r.responsiveness.as_ref().map(|x| x.norm_scale_metric),
            grad_difference: r.gradient_probe.as_ref().map(|x| x.grad_difference),
            success_rate: r.success_rate,
            wall_time: r.wall_time,
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            record: 0,
            message: format!("{other:?}"),
        },
    }
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    if rows.is_empty() {
        w.write_record(SUMMARY_HEADER)
            .map_err(|e| csv_error(path, e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().ne(SUMMARY_HEADER) {
        return Err(Error::Parse {
            record: 0,
            message: format!("unexpected summary header {header:?}"),
        });
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                record: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_metrics(records: &[MetricsRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("metrics serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            record: i,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_samples(samples: &[Vec<Vec<f64>>], path: &Path) -> Result<()> {
    std::fs::write(
        path,
        serde_json::to_string(samples).expect("samples serialize"),
    )
    .map_err(|e| Error::io(path, e))
}

pub fn read_samples(path: &Path) -> Result<Vec<Vec<Vec<f64>>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        record: 0,
        message: e.to_string(),
    })
}

/// Writes `metrics.jsonl`, `summary.csv` (final record), `learning_curve.svg`
/// and, given samples, `samples.svg` into `dir`.
pub fn emit_report(
    records: &[MetricsRecord],
    samples: Option<&[Vec<Vec<f64>>]>,
    dir: &Path,
) -> Result<()> {
    let last = records
        .last()
        .ok_or_else(|| Error::Contract("report needs at least one metrics record".into()))?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_metrics(records, &dir.join("metrics.jsonl"))?;
    let run = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    write_summary(
        &[SummaryRow::from_record(run, last)],
        &dir.join("summary.csv"),
    )?;
    let path = dir.join("learning_curve.svg");
    std::fs::write(&path, learning_curve_svg(records)).map_err(|e| Error::io(&path, e))?;
    if let Some(s) = samples.filter(|s| !s.is_empty()) {
        let path = dir.join("samples.svg");
        std::fs::write(&path, scatter_svg(s)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

const W: f64 = 480.0;
const H: f64 = 320.0;
const PAD: f64 = 40.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let (lo, hi) = values
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v), b.max(v))
            });
        if !lo.is_finite() {
            return Axis { lo: 0.0, hi: 1.0 };
        }
        let span = (hi - lo).max(1e-9);
        Axis {
            lo: lo - 0.05 * span,
            hi: hi + 0.05 * span,
        }
    }

    fn map(&self, v: f64, from: f64, to: f64) -> f64 {
        from + (v - self.lo) / (self.hi - self.lo) * (to - from)
    }
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = write!(
        s,
        r##"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="#999"/>"##,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = write!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        PAD / 2.0,
        escape(title)
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn polyline(s: &mut String, pts: &[(f64, f64)], x: &Axis, y: &Axis, color: &str) {
    let coords: Vec<String> = pts
        .iter()
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|&(a, b)| {
            format!(
                "{:.2},{:.2}",
                x.map(a, PAD, W - PAD),
                y.map(b, H - PAD, PAD)
            )
        })
        .collect();
    let _ = write!(
        s,
        r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
        coords.join(" ")
    );
}

/// Training loss (left scale) and mean purity (right scale) against step.
pub fn learning_curve_svg(records: &[MetricsRecord]) -> String {
    let mut s = svg_open("loss (blue) and mean purity (red)");
    let x = Axis::fit(records.iter().map(|r| r.step as f64));
    let loss: Vec<(f64, f64)> = records.iter().map(|r| (r.step as f64, r.loss)).collect();
    let purity: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (r.step as f64, r.collapse.mean_purity))
        .collect();
    polyline(
        &mut s,
        &loss,
        &x,
        &Axis::fit(loss.iter().map(|p| p.1)),
        COLORS[0],
    );
    polyline(&mut s, &purity, &x, &Axis { lo: 0.0, hi: 1.0 }, COLORS[1]);
    let _ = write!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">step</text></svg>"#,
        W / 2.0,
        H - 10.0
    );
    s
}

/// Generated samples coloured by condition. One-dimensional samples are
/// spread vertically by condition.
pub fn scatter_svg(samples: &[Vec<Vec<f64>>]) -> String {
    let mut s = svg_open("generated samples by condition");
    let k = samples.len().max(1) as f64;
    let pt = |c: usize, i: usize, x: &[f64]| -> (f64, f64) {
        match x {
            [a] => (*a, c as f64 + 0.8 * (i as f64 * 0.618_034).fract() - 0.4),
            [a, b, ..] => (*a, *b),
            [] => (0.0, 0.0),
        }
    };
    let all: Vec<(usize, f64, f64)> = samples
        .iter()
        .enumerate()
        .flat_map(|(c, xs)| xs.iter().enumerate().map(move |(i, x)| (c, pt(c, i, x))))
        .map(|(c, (a, b))| (c, a, b))
        .collect();
    let one_d = samples.iter().flatten().all(|x| x.len() == 1);
    let xa = Axis::fit(all.iter().map(|p| p.1));
    let ya = if one_d {
        Axis {
            lo: -0.6,
            hi: k - 0.4,
        }
    } else {
        Axis::fit(all.iter().map(|p| p.2))
    };
    for (c, a, b) in all {
        if a.is_finite() && b.is_finite() {
            let _ = write!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="1.5" fill="{}" fill-opacity="0.6"/>"#,
                xa.map(a, PAD, W - PAD),
                ya.map(b, H - PAD, PAD),
                COLORS[c % COLORS.len()]
            );
        }
    }
    s.push_str("</svg>");
    s
}
