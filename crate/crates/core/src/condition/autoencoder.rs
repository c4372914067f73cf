use serde::{Deserialize, Serialize};

use crate::diff::{Optimizer, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::flow::ConditionEncoder;
use crate::nn::{dense, lecun};
use crate::rng::SeededRng;

/// Cosine guard used by the reconstruction objective.
pub const COSINE_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderConfig {
    pub embed_dim: usize,
    pub latent_dim: usize,
    /// Hidden width; `None` means `2 · max(embed_dim, latent_dim)`.
    #[serde(default)]
    pub hidden: Option<usize>,
    #[serde(default = "default_momentum")]
    pub ema_momentum: f64,
    /// Adds a learned log-std head (the VAE variant).
    #[serde(default)]
    pub vae: bool,
    #[serde(default = "default_kl_weight")]
    pub kl_weight: f64,
}

fn default_momentum() -> f64 {
    0.999
}

fn default_kl_weight() -> f64 {
    1e-3
}

impl AutoencoderConfig {
    pub fn new(embed_dim: usize, latent_dim: usize) -> Self {
        Self {
            embed_dim,
            latent_dim,
            hidden: None,
            ema_momentum: default_momentum(),
            vae: false,
            kl_weight: default_kl_weight(),
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden
            .unwrap_or(2 * self.embed_dim.max(self.latent_dim))
    }
}

/// Learned standard deviation of the VAE variant, produced from the encoder's
/// hidden layer and clamped in log space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeHead {
    pub log_std_min: f64,
    pub log_std_max: f64,
}

impl Default for VaeHead {
    fn default() -> Self {
        Self {
            log_std_min: -5.0,
            log_std_max: 2.0,
        }
    }
}

// Encoder layout: w1, b1, w2, b2 [, ws, bs]; decoder layout: v1, c1, v2, c2.
const ENC_W1: usize = 0;
const ENC_B1: usize = 1;
const ENC_W2: usize = 2;
const ENC_B2: usize = 3;
const ENC_WS: usize = 4;
const ENC_BS: usize = 5;

/// Encoder `F` (embedding → action space), decoder `G` (action space →
/// embedding), and an exponential-moving-average copy of `F`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionAutoencoder {
    config: AutoencoderConfig,
    vae_head: Option<VaeHead>,
    /// Encoder parameters followed by decoder parameters.
    params: ParamSet,
    ema: ParamSet,
}

impl ConditionAutoencoder {
    pub fn new(config: AutoencoderConfig, rng: &mut SeededRng) -> Result<Self> {
        if config.embed_dim == 0 || config.latent_dim == 0 {
            return Err(Error::Config(
                "autoencoder dimensions must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&config.ema_momentum) {
            return Err(Error::Config(format!(
                "EMA momentum must lie in [0, 1], got {}",
                config.ema_momentum
            )));
        }
        let (de, d, h) = (config.embed_dim, config.latent_dim, config.hidden_width());
        let mut params = ParamSet::new();
        params.push("enc.w1", lecun(de, h, rng));
        params.push("enc.b1", Tensor::zeros(&[1, h]));
        params.push("enc.w2", lecun(h, d, rng));
        params.push("enc.b2", Tensor::zeros(&[1, d]));
        let vae_head = if config.vae {
            params.push("enc.ws", Tensor::zeros(&[h, d]));
            params.push("enc.bs", Tensor::zeros(&[1, d]));
            Some(VaeHead::default())
        } else {
            None
        };
        params.push("dec.v1", lecun(d, h, rng));
        params.push("dec.c1", Tensor::zeros(&[1, h]));
        params.push("dec.v2", lecun(h, de, rng));
        params.push("dec.c2", Tensor::zeros(&[1, de]));
        let mut ae = Self {
            config,
            vae_head,
            params,
            ema: ParamSet::new(),
        };
        ae.ema = ae.encoder_params();
        Ok(ae)
    }

    pub fn config(&self) -> &AutoencoderConfig {
        &self.config
    }

    pub fn vae_head(&self) -> Option<&VaeHead> {
        self.vae_head.as_ref()
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn ema_params(&self) -> &ParamSet {
        &self.ema
    }

    fn encoder_len(&self) -> usize {
        if self.vae_head.is_some() {
            6
        } else {
            4
        }
    }

    fn encoder_params(&self) -> ParamSet {
        let mut set = ParamSet::new();
        for p in self.params.iter().take(self.encoder_len()) {
            set.push(p.name.clone(), p.value.clone());
        }
        set
    }

    /// Records the encoder hidden layer and mean output.
    fn encode_on(&self, tape: &mut Tape, enc: &[Var], e: Var) -> Result<(Var, Var)> {
        let h = dense(tape, e, enc[ENC_W1], Some(enc[ENC_B1]))?;
        let h = tape.tanh(h);
        let z = dense(tape, h, enc[ENC_W2], Some(enc[ENC_B2]))?;
        Ok((h, z))
    }

    fn log_std_on(&self, tape: &mut Tape, enc: &[Var], hidden: Var) -> Result<Option<Var>> {
        let Some(head) = self.vae_head else {
            return Ok(None);
        };
        let s = dense(tape, hidden, enc[ENC_WS], Some(enc[ENC_BS]))?;
        Ok(Some(tape.clamp(s, head.log_std_min, head.log_std_max)))
    }

    fn decode_on(&self, tape: &mut Tape, dec: &[Var], z: Var) -> Result<Var> {
        let h = dense(tape, z, dec[0], Some(dec[1]))?;
        let h = tape.tanh(h);
        dense(tape, h, dec[2], Some(dec[3]))
    }

    /// `−mean_b cos(G(F(e_b)), e_b)` over the rows of `batch`.
    pub fn loss_on(&self, tape: &mut Tape, vars: &[Var], batch: &Tensor) -> Result<Var> {
        self.check_batch(batch)?;
        let (enc, dec) = vars.split_at(self.encoder_len());
        let e = tape.constant(batch.clone());
        let (_, z) = self.encode_on(tape, enc, e)?;
        let r = self.decode_on(tape, dec, z)?;
        let c = tape.row_cosine(r, e, COSINE_EPS)?;
        let m = tape.mean(c);
        Ok(tape.scale(m, -1.0))
    }

    /// Reparameterized VAE objective: cosine reconstruction of `G(μ + σ ⊙ ζ)`
    /// plus `kl_weight · KL(N(μ, σ²) ‖ N(0, I))` averaged over the batch.
    pub fn vae_loss_on(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        batch: &Tensor,
        noise: &Tensor,
    ) -> Result<Var> {
        self.check_batch(batch)?;
        let (enc, dec) = vars.split_at(self.encoder_len());
        let e = tape.constant(batch.clone());
        let (h, mu) = self.encode_on(tape, enc, e)?;
        let log_std = self
            .log_std_on(tape, enc, h)?
            .ok_or_else(|| Error::Config("VAE loss requires a VAE head".into()))?;
        let std = tape.exp(log_std);
        let zeta = tape.constant(noise.clone());
        let spread = tape.mul(std, zeta)?;
        let z = tape.add(mu, spread)?;
        let r = self.decode_on(tape, dec, z)?;
        let c = tape.row_cosine(r, e, COSINE_EPS)?;
        let rec = tape.mean(c);
        let rec = tape.scale(rec, -1.0);

        let mu2 = tape.mul(mu, mu)?;
        let var = tape.mul(std, std)?;
        let two_ls = tape.scale(log_std, 2.0);
        let kl = tape.add(mu2, var)?;
        let kl = tape.sub(kl, two_ls)?;
        let kl = tape.offset(kl, -1.0);
        let kl = tape.sum(kl);
        let kl = tape.scale(kl, 0.5 * self.config.kl_weight / batch.rows() as f64);
        tape.add(rec, kl)
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        if batch.shape().len() != 2 || batch.cols() != self.config.embed_dim {
            return Err(Error::dim(
                "autoencoder input",
                batch.shape(),
                &[self.config.embed_dim],
            ));
        }
        Ok(())
    }

    /// Mean cosine similarity between embeddings and their reconstructions.
    pub fn reconstruction_similarity(&self, batch: &Tensor) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = self.params.bind_frozen(&mut tape);
        let l = self.loss_on(&mut tape, &vars, batch)?;
        Ok(-tape.scalar(l))
    }

    /// Encoder mean and (VAE only) std, from the live or EMA weights.
    pub fn encode(&self, e: &Tensor, use_ema: bool) -> Result<(Tensor, Option<Tensor>)> {
        self.check_batch(e)?;
        let mut tape = Tape::new();
        let enc = if use_ema {
            self.ema.bind_frozen(&mut tape)
        } else {
            let mut all = self.params.bind_frozen(&mut tape);
            all.truncate(self.encoder_len());
            all
        };
        let ev = tape.constant(e.clone());
        let (h, z) = self.encode_on(&mut tape, &enc, ev)?;
        let std = match self.log_std_on(&mut tape, &enc, h)? {
            Some(ls) => {
                let s = tape.exp(ls);
                Some(tape.value(s).clone())
            }
            None => None,
        };
        Ok((tape.value(z).clone(), std))
    }

    /// Draws `x0 = μ(e) + σ(e) ⊙ ζ` from the VAE head, one row per embedding.
    pub fn vae_sample(&self, e: &Tensor, rng: &mut SeededRng) -> Result<Tensor> {
        let (mu, std) = self.encode(e, false)?;
        let std = std.ok_or_else(|| Error::Config("vae_sample requires a VAE head".into()))?;
        let data = mu
            .data()
            .iter()
            .zip(std.data())
            .map(|(m, s)| m + s * rng.normal())
            .collect();
        Tensor::new(mu.shape().to_vec(), data)
    }

    /// `φ⁻ ← m·φ⁻ + (1−m)·φ` over the encoder parameters.
    pub fn ema_update(&mut self) {
        let m = self.config.ema_momentum;
        let n = self.encoder_len();
        for (target, live) in self.ema.iter_mut().zip(self.params.iter().take(n)) {
            for (t, &l) in target.value.data_mut().iter_mut().zip(live.value.data()) {
                *t = m * *t + (1.0 - m) * l;
            }
        }
    }

    /// Overwrites the EMA copy with the live encoder.
    pub fn sync_ema(&mut self) {
        self.ema = self.encoder_params();
    }

    /// Euclidean distance between EMA and live encoder weights.
    pub fn ema_distance(&self) -> f64 {
        self.ema
            .iter()
            .zip(self.params.iter())
            .flat_map(|(a, b)| a.value.data().iter().zip(b.value.data()))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    pub fn set_momentum(&mut self, m: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&m) {
            return Err(Error::Config(format!(
                "EMA momentum must lie in [0, 1], got {m}"
            )));
        }
        self.config.ema_momentum = m;
        Ok(())
    }

    /// One optimizer step on a batch of embeddings; returns the loss.
    pub fn train_step(
        &mut self,
        batch: &Tensor,
        optimizer: &mut Optimizer,
        rng: &mut SeededRng,
    ) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let loss = if self.vae_head.is_some() {
            let noise = Tensor::new(
                vec![batch.rows(), self.config.latent_dim],
                (0..batch.rows() * self.config.latent_dim)
                    .map(|_| rng.normal())
                    .collect(),
            )?;
            self.vae_loss_on(&mut tape, &vars, batch, &noise)?
        } else {
            self.loss_on(&mut tape, &vars, batch)?
        };
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Ok(value);
        }
        tape.backward(loss)?;
        self.params.accumulate(&tape, &vars);
        optimizer.step(&mut self.params)?;
        self.params.zero_grad();
        Ok(value)
    }
}

impl ConditionEncoder for ConditionAutoencoder {
    fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    fn encode_moments(&self, e: &Tensor, use_ema: bool) -> Result<(Tensor, Option<Tensor>)> {
        self.encode(e, use_ema)
    }
}

/// Largest batch used per autoencoder step; larger embedding sets are
/// subsampled.
pub const AE_BATCH: usize = 256;

/// Trains the autoencoder for `steps` optimizer steps on `embeddings` and
/// returns the per-step loss curve.
pub fn train_autoencoder(
    ae: &mut ConditionAutoencoder,
    embeddings: &[Vec<f64>],
    steps: usize,
    optimizer: &mut Optimizer,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    if embeddings.is_empty() {
        return Err(Error::Config(
            "autoencoder needs at least one embedding".into(),
        ));
    }
    let full = Tensor::from_rows(embeddings)?;
    let mut curve = Vec::with_capacity(steps);
    for step in 0..steps {
        let batch = if embeddings.len() <= AE_BATCH {
            full.clone()
        } else {
            let rows: Vec<Vec<f64>> = (0..AE_BATCH)
                .map(|_| embeddings[rng.below(embeddings.len())].clone())
                .collect();
            Tensor::from_rows(&rows)?
        };
        let loss = ae.train_step(&batch, optimizer, rng)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                step,
                what: format!("autoencoder loss {loss}"),
            });
        }
        curve.push(loss);
    }
    Ok(curve)
}
