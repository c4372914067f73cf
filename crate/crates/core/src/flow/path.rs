use crate::diff::{ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

use super::source::Source;

/// A velocity field `v(t, x, e)` that can be recorded on a tape.
pub trait VelocityField: Sync {
    fn action_dim(&self) -> usize;

    /// Trainable parameters, bound in order before [`velocity_on`](Self::velocity_on).
    fn params(&self) -> &ParamSet;

    /// Records `v(t_b, x_b, e_b)` for every row `b`; returns a `B × d` node.
    fn velocity_on(
        &self,
        tape: &mut Tape,
        params: &[Var],
        t: &[f64],
        x: &Tensor,
        e: &Tensor,
    ) -> Result<Var>;

    /// Evaluates the field without recording gradients.
    fn velocity(&self, t: &[f64], x: &Tensor, e: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.params().bind_frozen(&mut tape);
        let v = self.velocity_on(&mut tape, &vars, t, x, e)?;
        Ok(tape.value(v).clone())
    }
}

/// Closed-form field without parameters, e.g. an oracle wired in as a policy.
pub struct FnField<F> {
    dim: usize,
    f: F,
    empty: ParamSet,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], &Tensor, &Tensor) -> Result<Tensor> + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self {
            dim,
            f,
            empty: ParamSet::new(),
        }
    }
}

impl<F> VelocityField for FnField<F>
where
    F: Fn(&[f64], &Tensor, &Tensor) -> Result<Tensor> + Sync,
{
    fn action_dim(&self) -> usize {
        self.dim
    }

    fn params(&self) -> &ParamSet {
        &self.empty
    }

    fn velocity_on(
        &self,
        tape: &mut Tape,
        _params: &[Var],
        t: &[f64],
        x: &Tensor,
        e: &Tensor,
    ) -> Result<Var> {
        let v = (self.f)(t, x, e)?;
        if v.shape() != x.shape() {
            return Err(Error::dim("field output", v.shape(), x.shape()));
        }
        Ok(tape.constant(v))
    }
}

/// `t ~ U[0, 1)`.
pub fn sample_time(rng: &mut SeededRng) -> f64 {
    rng.uniform()
}

/// One point on the linear interpolation path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSample {
    pub t: f64,
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub xt: Vec<f64>,
    pub u: Vec<f64>,
}

/// `xt = t·x1 + (1−t)·x0 + σ·ζ`, `u = x1 − x0`. Normals are only drawn when
/// `σ > 0`.
pub fn interpolate(
    x0: &[f64],
    x1: &[f64],
    t: f64,
    sigma: f64,
    rng: &mut SeededRng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if x0.len() != x1.len() {
        return Err(Error::dim("interpolate", &[x0.len()], &[x1.len()]));
    }
    if sigma < 0.0 {
        return Err(Error::Config(format!(
            "path noise must be non-negative, got {sigma}"
        )));
    }
    let mut xt: Vec<f64> = x0
        .iter()
        .zip(x1)
        .map(|(a, b)| t * b + (1.0 - t) * a)
        .collect();
    if sigma > 0.0 {
        xt.iter_mut().for_each(|v| *v += sigma * rng.normal());
    }
    let u = x0.iter().zip(x1).map(|(a, b)| b - a).collect();
    Ok((xt, u))
}

/// A batch of path samples, row-aligned with its condition embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct PathBatch {
    pub t: Vec<f64>,
    pub x0: Tensor,
    pub xt: Tensor,
    pub u: Tensor,
}

/// Draws `t`, `x0 ~ q(x0|e)` and the interpolant for every row.
///
/// Draw order: all times, then all source samples, then path noise.
pub fn draw_path_batch(
    source: &Source<'_>,
    e: &Tensor,
    x1: &Tensor,
    sigma: f64,
    rng: &mut SeededRng,
) -> Result<PathBatch> {
    let rows = x1.rows();
    if e.rows() != rows {
        return Err(Error::dim("path batch", e.shape(), x1.shape()));
    }
    if rows == 0 {
        return Err(Error::Contract("empty batch".into()));
    }
    let t: Vec<f64> = (0..rows).map(|_| sample_time(rng)).collect();
    let x0 = source.sample(e, rng)?;
    if x0.shape() != x1.shape() {
        return Err(Error::dim("source sample", x0.shape(), x1.shape()));
    }
    let d = x1.cols();
    let mut xt = Vec::with_capacity(rows * d);
    let mut u = Vec::with_capacity(rows * d);
    for (r, &tr) in t.iter().enumerate() {
        let (a, b) = interpolate(x0.row_slice(r), x1.row_slice(r), tr, sigma, rng)?;
        xt.extend(a);
        u.extend(b);
    }
    Ok(PathBatch {
        t,
        xt: Tensor::matrix(rows, d, xt)?,
        u: Tensor::matrix(rows, d, u)?,
        x0,
    })
}

/// `mean_b ‖v(t_b, xt_b, e_b) − u_b‖²` for an already drawn batch. Only the
/// field's parameters receive gradients.
pub fn cfmc_loss_on<V: VelocityField + ?Sized>(
    net: &V,
    tape: &mut Tape,
    params: &[Var],
    e: &Tensor,
    batch: &PathBatch,
) -> Result<Var> {
    let v = net.velocity_on(tape, params, &batch.t, &batch.xt, e)?;
    let u = tape.constant(batch.u.clone());
    let l = tape.mse(v, u)?;
    Ok(tape.scale(l, batch.u.cols() as f64))
}

/// Draws a path batch and records the conditional flow-matching loss.
#[allow(clippy::too_many_arguments)]
pub fn cfmc_loss<V: VelocityField + ?Sized>(
    net: &V,
    tape: &mut Tape,
    params: &[Var],
    e: &Tensor,
    x1: &Tensor,
    source: &Source<'_>,
    sigma: f64,
    rng: &mut SeededRng,
) -> Result<Var> {
    let batch = draw_path_batch(source, e, x1, sigma, rng)?;
    cfmc_loss_on(net, tape, params, e, &batch)
}

/// Integrates `dx = v(t, x, e) dt` from `x0` over `[0, 1]` with `steps`
/// equal Euler steps.
pub fn euler_integrate<V: VelocityField + ?Sized>(
    net: &V,
    x0: Tensor,
    e: &Tensor,
    steps: usize,
) -> Result<Tensor> {
    if steps == 0 {
        return Err(Error::Config(
            "Euler integration needs at least one step".into(),
        ));
    }
    let h = 1.0 / steps as f64;
    let rows = x0.rows();
    let mut x = x0;
    for k in 0..steps {
        let t = vec![k as f64 * h; rows];
        let v = net.velocity(&t, &x, e)?;
        if !v.is_finite() {
            return Err(Error::NonFinite {
                step: k,
                what: "velocity".into(),
            });
        }
        x.data_mut()
            .iter_mut()
            .zip(v.data())
            .for_each(|(xi, vi)| *xi += h * vi);
    }
    Ok(x)
}

/// Draws `x0 ~ q(x0|e)` and integrates the field to `t = 1`.
pub fn euler_sample<V: VelocityField + ?Sized>(
    net: &V,
    source: &Source<'_>,
    e: &Tensor,
    steps: usize,
    rng: &mut SeededRng,
) -> Result<Tensor> {
    if steps == 0 {
        return Err(Error::Config(
            "Euler integration needs at least one step".into(),
        ));
    }
    let x0 = source.sample(e, rng)?;
    euler_integrate(net, x0, e, steps)
}
