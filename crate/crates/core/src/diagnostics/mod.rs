//! Probes for loss collapse and condition utilisation.

mod collapse;
mod gradient;
mod responsiveness;

use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::flow::{DatasetSpec, Source, VelocityField, VelocityOracle};
use crate::rng::SeededRng;

pub use collapse::{collapse_score, prefusion_similarity, CollapseScore, MIN_COLLAPSE_SAMPLES};
pub use gradient::{gradient_difference_probe, GradientProbeReport, JACOBIAN_ROWS};
pub use responsiveness::{
    cosine_metric, norm_scale_metric, responsiveness, ProbeBatch, ResponsivenessReport,
    DEFAULT_LAYER_WEIGHT, PROBE_BATCH,
};

/// Evaluation points `(t, x)` for comparing velocity fields.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeGrid {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

impl ProbeGrid {
    /// Cartesian grid of `times` × `n` evenly spaced scalars in `[lo, hi]`.
    pub fn line(times: Vec<f64>, lo: f64, hi: f64, n: usize) -> Self {
        let points = (0..n)
            .map(|i| vec![lo + (hi - lo) * i as f64 / (n.max(2) - 1) as f64])
            .collect();
        Self { times, points }
    }

    pub fn len(&self) -> usize {
        self.times.len() * self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn flatten(&self) -> Result<(Vec<f64>, Tensor)> {
        let mut t = Vec::with_capacity(self.len());
        let mut x = Vec::with_capacity(self.len());
        for &ti in &self.times {
            for p in &self.points {
                t.push(ti);
                x.push(p.clone());
            }
        }
        Ok((t, Tensor::from_rows(&x)?))
    }
}

/// RMS over grid points and conditions of `‖v_θ(t, x, c) − v*(t, x)‖`.
pub fn v_star_gap<V: VelocityField + ?Sized>(
    net: &V,
    ds: &DatasetSpec,
    source: &Source<'_>,
    grid: &ProbeGrid,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Contract("empty probe grid".into()));
    }
    let oracle = VelocityOracle::new(ds, source)?;
    let (t, x) = grid.flatten()?;
    let target: Vec<Vec<f64>> = t
        .iter()
        .enumerate()
        .map(|(i, &ti)| oracle.collapsed(ti, x.row_slice(i)))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..ds.num_conditions() {
        let e = ds.condition_embedding(c)?;
        let e = Tensor::from_rows(&vec![e; t.len()])?;
        let v = net.velocity(&t, &x, &e)?;
        for (i, want) in target.iter().enumerate() {
            total += v
                .row_slice(i)
                .iter()
                .zip(want)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            count += 1;
        }
    }
    Ok((total / count as f64).sqrt())
}

/// `sup` over the grid of `‖v_θ(t, x, e1) − v_θ(t, x, e2)‖`.
pub fn output_gap<V: VelocityField + ?Sized>(
    net: &V,
    e1: &[f64],
    e2: &[f64],
    grid: &ProbeGrid,
) -> Result<f64> {
    let (t, x) = grid.flatten()?;
    let a = net.velocity(&t, &x, &Tensor::from_rows(&vec![e1.to_vec(); t.len()])?)?;
    let b = net.velocity(&t, &x, &Tensor::from_rows(&vec![e2.to_vec(); t.len()])?)?;
    Ok(max_row_distance(&a, &b))
}

pub(crate) fn max_row_distance(a: &Tensor, b: &Tensor) -> f64 {
    (0..a.rows())
        .map(|i| {
            a.row_slice(i)
                .iter()
                .zip(b.row_slice(i))
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// Uniform choice of `n` record indices.
pub(crate) fn sample_indices(len: usize, n: usize, rng: &mut SeededRng) -> Vec<usize> {
    (0..n).map(|_| rng.below(len)).collect()
}
