use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::flow::{cfmc_loss_on, draw_path_batch, DatasetSpec, PathBatch, Source, VelocityField};
use crate::rng::SeededRng;

use super::{max_row_distance, sample_indices};

/// Rows whose full parameter Jacobian enters the `M̂` estimate.
pub const JACOBIAN_ROWS: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientProbeReport {
    /// `‖∇θ L(c1) − ∇θ L(c2)‖` on a shared batch.
    pub grad_difference: f64,
    /// `ε̂`: largest output gap between the two conditions on the batch points.
    pub output_gap: f64,
    /// `M̂`: largest Frobenius norm of `∇θ v_θ` over the Jacobian rows.
    pub grad_bound: f64,
    /// `D̂`: largest residual `‖v_θ − u‖` on the batch.
    pub residual_bound: f64,
    pub grad_norms: [f64; 2],
    pub batch_size: usize,
}

fn loss_gradient<V: VelocityField + ?Sized>(
    net: &V,
    e: &Tensor,
    batch: &PathBatch,
) -> Result<(Vec<f64>, Tensor)> {
    let mut tape = Tape::new();
    let vars = net.params().bind(&mut tape);
    let loss = cfmc_loss_on(net, &mut tape, &vars, e, batch)?;
    tape.backward(loss)?;
    let grad = flat_grad(&tape, &vars);
    let v = net.velocity(&batch.t, &batch.xt, e)?;
    Ok((grad, v))
}

fn flat_grad(tape: &Tape, vars: &[Var]) -> Vec<f64> {
    vars.iter()
        .flat_map(|&v| tape.grad(v).unwrap_or(&[]).iter().copied())
        .collect()
}

/// Frobenius norm of `∂v(t, x, e)/∂θ` for one input row.
pub(super) fn jacobian_norm<V: VelocityField + ?Sized>(
    net: &V,
    t: f64,
    x: &[f64],
    e: &[f64],
) -> Result<f64> {
    let d = x.len();
    let x = Tensor::row(x.to_vec());
    let e = Tensor::row(e.to_vec());
    let mut total = 0.0;
    for j in 0..d {
        let mut tape = Tape::new();
        let vars = net.params().bind(&mut tape);
        let v = net.velocity_on(&mut tape, &vars, &[t], &x, &e)?;
        let mut mask = Tensor::zeros(&[1, d]);
        mask.data_mut()[j] = 1.0;
        let mask = tape.constant(mask);
        let picked = tape.mul(v, mask)?;
        let out = tape.sum(picked);
        tape.backward(out)?;
        total += flat_grad(&tape, &vars).iter().map(|g| g * g).sum::<f64>();
    }
    Ok(total.sqrt())
}

/// Compares the loss gradients of two conditions under one shared draw of
/// `(t, x1, ζ)`: only the condition embedding fed to the network and, for
/// condition-dependent sources, the source mean differ.
#[allow(clippy::too_many_arguments)]
pub fn gradient_difference_probe<V: VelocityField + ?Sized>(
    net: &V,
    ds: &DatasetSpec,
    source: &Source<'_>,
    c1: usize,
    c2: usize,
    batch_size: usize,
    rng: &mut SeededRng,
) -> Result<GradientProbeReport> {
    if batch_size == 0 {
        return Err(Error::Contract("probe batch must be non-empty".into()));
    }
    let e1 = ds.condition_embedding(c1)?;
    let e2 = ds.condition_embedding(c2)?;
    let pool: Vec<usize> = ds
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.condition == c1 || r.condition == c2)
        .map(|(i, _)| i)
        .collect();
    let idx: Vec<usize> = sample_indices(pool.len(), batch_size, rng)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    let (_, x1) = ds.batch(&idx)?;
    let e1 = Tensor::from_rows(&vec![e1; batch_size])?;
    let e2 = Tensor::from_rows(&vec![e2; batch_size])?;

    let mut shared = rng.clone();
    let b1 = draw_path_batch(source, &e1, &x1, ds.path_noise, &mut shared)?;
    let b2 = draw_path_batch(source, &e2, &x1, ds.path_noise, &mut rng.clone())?;
    *rng = shared;

    let (g1, v1) = loss_gradient(net, &e1, &b1)?;
    let (g2, v2) = loss_gradient(net, &e2, &b2)?;
    let grad_difference = g1
        .iter()
        .zip(&g2)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let gnorm = |g: &[f64]| g.iter().map(|x| x * x).sum::<f64>().sqrt();

    let cross1 = net.velocity(&b1.t, &b1.xt, &e2)?;
    let cross2 = net.velocity(&b2.t, &b2.xt, &e1)?;
    let output_gap = max_row_distance(&v1, &cross1).max(max_row_distance(&v2, &cross2));
    let residual_bound = max_row_distance(&v1, &b1.u).max(max_row_distance(&v2, &b2.u));

    let rows = batch_size.min(JACOBIAN_ROWS);
    let grad_bound = (0..rows)
        .into_par_iter()
        .flat_map(|i| [(i, &b1, &e1), (i, &b2, &e2)])
        .map(|(i, b, e)| jacobian_norm(net, b.t[i], b.xt.row_slice(i), e.row_slice(i)))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    Ok(GradientProbeReport {
        grad_difference,
        output_gap,
        grad_bound,
        residual_bound,
        grad_norms: [gnorm(&g1), gnorm(&g2)],
        batch_size,
    })
}
