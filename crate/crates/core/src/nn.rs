//! Layer helpers shared by the policy and the condition autoencoder.

use crate::diff::{Tape, Tensor, Var};
use crate::error::Result;
use crate::rng::SeededRng;

/// `rows × cols` matrix with i.i.d. `N(0, std²)` entries.
pub(crate) fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut SeededRng) -> Tensor {
    let data = (0..rows * cols).map(|_| std * rng.normal()).collect();
    Tensor::matrix(rows, cols, data).expect("positive dims")
}

/// Fan-in scaled weight matrix.
pub(crate) fn lecun(rows: usize, cols: usize, rng: &mut SeededRng) -> Tensor {
    gaussian(rows, cols, 1.0 / (rows as f64).sqrt(), rng)
}

pub(crate) fn dense(tape: &mut Tape, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    match b {
        Some(b) => tape.add_bias(y, b),
        None => Ok(y),
    }
}
