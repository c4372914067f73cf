use serde::{Deserialize, Serialize};

use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceMode {
    Standard,
    Cocos,
    CocosVae,
}

/// Parameters of the source distribution `q(x0 | c)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub mode: SourceMode,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Read the encoder's EMA copy instead of its live weights.
    #[serde(default)]
    pub ema: bool,
}

fn default_alpha() -> f64 {
    1.0
}

fn default_beta() -> f64 {
    0.2
}

impl Default for SourceSpec {
    fn default() -> Self {
        Self::standard()
    }
}

impl SourceSpec {
    pub fn standard() -> Self {
        Self {
            mode: SourceMode::Standard,
            alpha: default_alpha(),
            beta: default_beta(),
            ema: false,
        }
    }

    pub fn cocos(alpha: f64, beta: f64) -> Self {
        Self {
            mode: SourceMode::Cocos,
            alpha,
            beta,
            ema: false,
        }
    }

    pub fn cocos_vae(alpha: f64) -> Self {
        Self {
            mode: SourceMode::CocosVae,
            alpha,
            beta: default_beta(),
            ema: false,
        }
    }

    pub fn needs_encoder(&self) -> bool {
        self.mode != SourceMode::Standard
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Maps condition embeddings into the action space.
pub trait ConditionEncoder: Send + Sync {
    fn latent_dim(&self) -> usize;

    /// Per-row mean and, for variational encoders, per-row std.
    fn encode_moments(&self, e: &Tensor, use_ema: bool) -> Result<(Tensor, Option<Tensor>)>;
}

/// Per-row Gaussian source parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceMoments {
    pub mean: Tensor,
    pub std: Tensor,
}

/// A [`SourceSpec`] bound to its encoder.
#[derive(Clone, Copy)]
pub struct Source<'a> {
    spec: SourceSpec,
    encoder: Option<&'a dyn ConditionEncoder>,
    action_dim: usize,
}

impl std::fmt::Debug for Source<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Source")
            .field("spec", &self.spec)
            .field("has_encoder", &self.encoder.is_some())
            .field("action_dim", &self.action_dim)
            .finish()
    }
}

impl<'a> Source<'a> {
    pub fn new(
        spec: SourceSpec,
        encoder: Option<&'a dyn ConditionEncoder>,
        action_dim: usize,
    ) -> Result<Self> {
        spec.validate()?;
        if spec.needs_encoder() {
            let enc = encoder.ok_or_else(|| {
                Error::Config(format!(
                    "{:?} source requires a condition encoder",
                    spec.mode
                ))
            })?;
            if enc.latent_dim() != action_dim {
                return Err(Error::dim(
                    "encoder output",
                    &[enc.latent_dim()],
                    &[action_dim],
                ));
            }
        }
        Ok(Self {
            spec,
            encoder,
            action_dim,
        })
    }

    pub fn standard(action_dim: usize) -> Self {
        Self {
            spec: SourceSpec::standard(),
            encoder: None,
            action_dim,
        }
    }

    pub fn spec(&self) -> &SourceSpec {
        &self.spec
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Mean and std of `q(x0 | e)` for every row of `e`.
    pub fn moments(&self, e: &Tensor) -> Result<SourceMoments> {
        let rows = e.rows();
        let shape = [rows, self.action_dim];
        match self.spec.mode {
            SourceMode::Standard => Ok(SourceMoments {
                mean: Tensor::zeros(&shape),
                std: Tensor::filled(&shape, 1.0),
            }),
            SourceMode::Cocos | SourceMode::CocosVae => {
                let enc = self.encoder.expect("checked in Source::new");
                let (mut mean, std) = enc.encode_moments(e, self.spec.ema)?;
                mean.data_mut()
                    .iter_mut()
                    .for_each(|m| *m *= self.spec.alpha);
                let std = match (self.spec.mode, std) {
                    (SourceMode::CocosVae, Some(s)) => s,
                    (SourceMode::CocosVae, None) => {
                        return Err(Error::Config(
                            "cocos-vae source requires an encoder with a VAE head".into(),
                        ))
                    }
                    _ => Tensor::filled(&shape, self.spec.beta),
                };
                Ok(SourceMoments { mean, std })
            }
        }
    }

    /// Draws one `x0` per row of `e`.
    ///
    /// Exactly `rows × action_dim` standard normals are consumed in every
    /// mode, so modes with equal moments produce equal samples.
    pub fn sample(&self, e: &Tensor, rng: &mut SeededRng) -> Result<Tensor> {
        let m = self.moments(e)?;
        Ok(draw(&m, rng))
    }
}

pub(crate) fn draw(m: &SourceMoments, rng: &mut SeededRng) -> Tensor {
    let data = m
        .mean
        .data()
        .iter()
        .zip(m.std.data())
        .map(|(mu, s)| mu + s * rng.normal())
        .collect();
    Tensor::new(m.mean.shape().to_vec(), data).expect("same shape")
}

/// Free-function form of [`Source::sample`] for a single embedding.
pub fn sample_source(
    spec: SourceSpec,
    encoder: Option<&dyn ConditionEncoder>,
    e: &[f64],
    action_dim: usize,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    let src = Source::new(spec, encoder, action_dim)?;
    Ok(src.sample(&Tensor::row(e.to_vec()), rng)?.into_data())
}
