use crate::diff::Tensor;
use crate::error::{Error, Result};

use super::dataset::DatasetSpec;
use super::source::Source;

#[derive(Clone, Debug)]
struct Component {
    condition: usize,
    weight: f64,
    x1: Vec<f64>,
    mu0: Vec<f64>,
    var0: Vec<f64>,
}

/// Closed-form conditional expectation `E[x1 − x0 | xt = x]` for a Gaussian
/// source and the dataset's discrete action support.
///
/// Given one support point `x1ᵢ` the pair `(x0, xt)` is jointly Gaussian, so
/// each component contributes its Gaussian-conditioned `E[x0 | xt, x1ᵢ]`
/// weighted by its posterior responsibility.
#[derive(Clone, Debug)]
pub struct VelocityOracle {
    action_dim: usize,
    sigma: f64,
    components: Vec<Component>,
}

impl VelocityOracle {
    pub fn new(ds: &DatasetSpec, source: &Source<'_>) -> Result<Self> {
        if ds.records.is_empty() {
            return Err(Error::Config("oracle needs a non-empty dataset".into()));
        }
        let mut counts = vec![0usize; ds.num_conditions()];
        for r in &ds.records {
            *counts
                .get_mut(r.condition)
                .ok_or(Error::UnknownCondition(r.condition))? += 1;
        }
        let rows: Vec<Vec<f64>> = ds.records.iter().map(|r| r.embedding.clone()).collect();
        let moments = source.moments(&Tensor::from_rows(&rows)?)?;
        if moments.mean.cols() != ds.action_dim {
            return Err(Error::dim(
                "oracle source",
                moments.mean.shape(),
                &[ds.action_dim],
            ));
        }
        let components = ds
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| Component {
                condition: r.condition,
                weight: ds.frequencies[r.condition] / counts[r.condition] as f64,
                x1: r.x1.clone(),
                mu0: moments.mean.row_slice(i).to_vec(),
                var0: moments.std.row_slice(i).iter().map(|s| s * s).collect(),
            })
            .collect();
        Ok(Self {
            action_dim: ds.action_dim,
            sigma: ds.path_noise,
            components,
        })
    }

    /// `u_t(x | c)`: the velocity generating condition `c`'s probability path.
    pub fn marginal(&self, c: usize, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        if !self.components.iter().any(|k| k.condition == c) {
            return Err(Error::UnknownCondition(c));
        }
        self.posterior_mean(self.components.iter().filter(|k| k.condition == c), t, x)
    }

    /// `v*(t, x)`: the condition-independent minimizer of the
    /// condition-averaged objective.
    pub fn collapsed(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.posterior_mean(self.components.iter(), t, x)
    }

    fn posterior_mean<'a>(
        &self,
        comps: impl Iterator<Item = &'a Component> + Clone,
        t: f64,
        x: &[f64],
    ) -> Result<Vec<f64>> {
        let d = self.action_dim;
        if x.len() != d {
            return Err(Error::dim("oracle point", &[x.len()], &[d]));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Config(format!("oracle time {t} outside [0, 1]")));
        }
        let s2_of = |var0: f64| (1.0 - t) * (1.0 - t) * var0 + self.sigma * self.sigma;

        if comps
            .clone()
            .any(|k| k.var0.iter().any(|&v| s2_of(v) == 0.0))
        {
            // xt = x1 almost surely; only exact support points carry mass.
            let mut total = 0.0;
            let mut acc = vec![0.0; d];
            for k in comps.filter(|k| k.x1.as_slice() == x) {
                total += k.weight;
                for j in 0..d {
                    acc[j] += k.weight * (k.x1[j] - k.mu0[j]);
                }
            }
            if total == 0.0 {
                return Err(Error::DegenerateDensity(format!(
                    "zero path variance at t = {t} and x outside the data support"
                )));
            }
            return Ok(acc.into_iter().map(|a| a / total).collect());
        }

        let mut log_w = Vec::new();
        let mut vel = Vec::new();
        for k in comps {
            let mut lw = k.weight.ln();
            let mut u = Vec::with_capacity(d);
            for j in 0..d {
                let s2 = s2_of(k.var0[j]);
                let mean = t * k.x1[j] + (1.0 - t) * k.mu0[j];
                let r = x[j] - mean;
                lw -= 0.5 * r * r / s2 + 0.5 * s2.ln();
                let ex0 = k.mu0[j] + (1.0 - t) * k.var0[j] / s2 * r;
                u.push(k.x1[j] - ex0);
            }
            log_w.push(lw);
            vel.push(u);
        }
        let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::DegenerateDensity(format!(
                "no posterior mass at t = {t}"
            )));
        }
        let mut total = 0.0;
        let mut acc = vec![0.0; d];
        for (lw, u) in log_w.iter().zip(&vel) {
            let w = (lw - max).exp();
            total += w;
            for j in 0..d {
                acc[j] += w * u[j];
            }
        }
        Ok(acc.into_iter().map(|a| a / total).collect())
    }
}

pub fn marginal_velocity_oracle(
    ds: &DatasetSpec,
    source: &Source<'_>,
    c: usize,
    t: f64,
    x: &[f64],
) -> Result<Vec<f64>> {
    VelocityOracle::new(ds, source)?.marginal(c, t, x)
}

pub fn collapsed_velocity_oracle(
    ds: &DatasetSpec,
    source: &Source<'_>,
    t: f64,
    x: &[f64],
) -> Result<Vec<f64>> {
    VelocityOracle::new(ds, source)?.collapsed(t, x)
}
