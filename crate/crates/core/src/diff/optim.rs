use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum OptimizerMode {
    PlainGradientDescent,
    AdaptiveMoment { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerMode {
    fn default() -> Self {
        OptimizerMode::AdaptiveMoment {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First-order optimizer. Gradients are read, never cleared; the caller
/// zeroes them between steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub lr: f64,
    pub mode: OptimizerMode,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(lr: f64, mode: OptimizerMode) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        Ok(Self {
            lr,
            mode,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn sgd(lr: f64) -> Result<Self> {
        Self::new(lr, OptimizerMode::PlainGradientDescent)
    }

    pub fn adam(lr: f64) -> Result<Self> {
        Self::new(lr, OptimizerMode::default())
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    fn ensure_buffers(&mut self, params: &ParamSet) -> Result<()> {
        if self.first.is_empty() && self.step == 0 {
            self.first = params.iter().map(|p| vec![0.0; p.value.numel()]).collect();
            self.second = self.first.clone();
        }
        let ok = self.first.len() == params.len()
            && params
                .iter()
                .zip(&self.first)
                .all(|(p, m)| p.value.numel() == m.len());
        if !ok {
            return Err(Error::dim(
                "optimizer state",
                &[self.first.len()],
                &[params.len()],
            ));
        }
        Ok(())
    }

    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        match self.mode {
            OptimizerMode::PlainGradientDescent => {
                for p in params.iter_mut().filter(|p| !p.frozen) {
                    let lr = self.lr;
                    for (w, g) in p.value.data_mut().iter_mut().zip(&p.grad) {
                        *w -= lr * g;
                    }
                }
            }
            OptimizerMode::AdaptiveMoment { beta1, beta2, eps } => {
                self.ensure_buffers(params)?;
                let t = (self.step + 1) as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for ((p, m), v) in params
                    .iter_mut()
                    .zip(self.first.iter_mut())
                    .zip(self.second.iter_mut())
                {
                    if p.frozen {
                        continue;
                    }
                    let grad = &p.grad;
                    for (i, w) in p.value.data_mut().iter_mut().enumerate() {
                        let g = grad[i];
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                        let mh = m[i] / bc1;
                        let vh = v[i] / bc2;
                        *w -= self.lr * mh / (vh.sqrt() + eps);
                    }
                }
            }
        }
        self.step += 1;
        Ok(())
    }
}
