use super::params::ParamSet;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Compares reverse-mode gradients of a scalar function of `params` with
/// central differences of step `h`.
///
/// Returns `max |analytic − numeric| / max(|analytic|, 1e-8)` over every
/// scalar parameter. Parameter values are restored before returning and the
/// parameter gradient buffers are left untouched.
pub fn finite_difference_check<F>(params: &mut ParamSet, h: f64, mut f: F) -> Result<f64>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let loss = f(&mut tape, &vars)?;
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(Error::Numeric(format!(
            "function value {value} is not finite"
        )));
    }
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_default())
        .collect();

    let mut eval = |params: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = params.bind_frozen(&mut tape);
        let loss = f(&mut tape, &vars)?;
        let v = tape.scalar(loss);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric(format!("function value {v} is not finite")))
        }
    };

    let mut worst = 0.0f64;
    for pi in 0..params.len() {
        for j in 0..params.get(pi).value.numel() {
            let orig = params.get(pi).value.data()[j];
            params.get_mut(pi).value.data_mut()[j] = orig + h;
            let up = eval(params);
            params.get_mut(pi).value.data_mut()[j] = orig - h;
            let down = eval(params);
            params.get_mut(pi).value.data_mut()[j] = orig;
            let numeric = (up? - down?) / (2.0 * h);
            let a = analytic[pi][j];
            let err = (a - numeric).abs() / a.abs().max(1e-8);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
