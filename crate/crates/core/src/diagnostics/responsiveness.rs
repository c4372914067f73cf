use serde::{Deserialize, Serialize};

use crate::condition::{dot, norm, COSINE_EPS};
use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::flow::DatasetSpec;
use crate::policy::{HiddenTrace, VelocityNetwork};
use crate::rng::{stream, SeededRng};

use super::sample_indices;

pub const DEFAULT_LAYER_WEIGHT: f64 = 0.5;
/// Size of the fixed probe batch the metrics are averaged over.
pub const PROBE_BATCH: usize = 64;

pub(super) fn cos(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b)).max(COSINE_EPS)
}

fn tokens(m: &Tensor) -> impl Iterator<Item = &[f64]> {
    (0..m.rows()).map(move |s| m.row_slice(s))
}

fn check(trace: &HiddenTrace) -> Result<()> {
    if trace.layers.is_empty() {
        return Err(Error::Contract("hidden trace has no layers".into()));
    }
    Ok(())
}

/// Per-layer `min_s cos(h_s, h̄_s)`.
fn layer_cosines(trace: &HiddenTrace) -> Vec<f64> {
    trace
        .layers
        .iter()
        .map(|(h, hb)| {
            tokens(h)
                .zip(tokens(hb))
                .map(|(a, b)| cos(a, b))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Per-layer `max_s |‖h̄_s‖ − ‖h_s‖| / ‖h_s‖`.
fn layer_norm_scales(trace: &HiddenTrace) -> Result<Vec<f64>> {
    trace
        .layers
        .iter()
        .enumerate()
        .map(|(l, (h, hb))| {
            tokens(h).zip(tokens(hb)).try_fold(0.0f64, |acc, (a, b)| {
                let na = norm(a);
                if na == 0.0 {
                    return Err(Error::DegenerateInput(format!(
                        "zero-norm pre-injection state in layer {l}"
                    )));
                }
                Ok(acc.max(((norm(b) - na) / na).abs()))
            })
        })
        .collect()
}

fn weighted(values: &[f64], w: f64) -> f64 {
    values.iter().rev().fold(0.0, |acc, v| v + w * acc)
}

/// `Σ_l w^l · min_s cos(h^l_s, h̄^l_s)`.
pub fn cosine_metric(trace: &HiddenTrace, w: f64) -> Result<f64> {
    check(trace)?;
    Ok(weighted(&layer_cosines(trace), w))
}

/// `Σ_l w^l · max_s |‖h̄^l_s‖ − ‖h^l_s‖| / ‖h^l_s‖`.
pub fn norm_scale_metric(trace: &HiddenTrace, w: f64) -> Result<f64> {
    check(trace)?;
    Ok(weighted(&layer_norm_scales(trace)?, w))
}

/// Fixed inputs for comparing responsiveness across models.
///
/// Records are drawn uniformly; `x` lies on the standard-source path of the
/// drawn action, so the batch does not depend on the model being probed.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeBatch {
    pub seed: u64,
    pub t: Vec<f64>,
    pub x: Tensor,
    pub e: Tensor,
}

impl ProbeBatch {
    pub fn draw(ds: &DatasetSpec, n: usize, seed: u64) -> Result<Self> {
        if ds.records.is_empty() || n == 0 {
            return Err(Error::Contract("probe batch needs records".into()));
        }
        let mut rng = SeededRng::new(seed, stream::PROBE);
        let idx = sample_indices(ds.records.len(), n, &mut rng);
        let (e, x1) = ds.batch(&idx)?;
        let t: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let mut x = x1;
        for (i, &ti) in t.iter().enumerate() {
            for v in &mut x.data_mut()[i * ds.action_dim..(i + 1) * ds.action_dim] {
                *v = ti * *v + (1.0 - ti) * rng.normal();
            }
        }
        Ok(Self { seed, t, x, e })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponsivenessReport {
    /// Layer-weighted cosine metric averaged over the probe batch.
    pub cosine_metric: f64,
    /// Layer-weighted norm-scale metric averaged over the probe batch.
    pub norm_scale_metric: f64,
    pub layer_weight: f64,
    /// Per-layer batch means of `min_s cos`.
    pub per_layer_cosine: Vec<f64>,
    /// Per-layer batch means of `max_s` relative norm change.
    pub per_layer_norm_scale: Vec<f64>,
    pub probe_seed: u64,
    pub probe_size: usize,
}

/// Averages both metrics over every sample of the probe batch.
pub fn responsiveness(
    net: &VelocityNetwork,
    probe: &ProbeBatch,
    w: f64,
) -> Result<ResponsivenessReport> {
    let (_, traces) = net.forward_traced(&probe.t, &probe.x, &probe.e)?;
    let n = traces.len() as f64;
    let layers = net.config().layers;
    let mut cos_sum = 0.0;
    let mut norm_sum = 0.0;
    let mut per_cos = vec![0.0; layers];
    let mut per_norm = vec![0.0; layers];
    for tr in &traces {
        let lc = layer_cosines(tr);
        let ln = layer_norm_scales(tr)?;
        cos_sum += weighted(&lc, w);
        norm_sum += weighted(&ln, w);
        for l in 0..layers {
            per_cos[l] += lc[l] / n;
            per_norm[l] += ln[l] / n;
        }
    }
    Ok(ResponsivenessReport {
        cosine_metric: cos_sum / n,
        norm_scale_metric: norm_sum / n,
        layer_weight: w,
        per_layer_cosine: per_cos,
        per_layer_norm_scale: per_norm,
        probe_seed: probe.seed,
        probe_size: traces.len(),
    })
}
