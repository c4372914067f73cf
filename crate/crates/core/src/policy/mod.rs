//! The velocity network `v_θ(t, x, c)`: Fourier time features, a stack of
//! dense blocks with additive per-layer condition injection, and optional
//! capture of hidden states on both sides of each injection.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::diff::{ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::flow::VelocityField;
use crate::nn::{dense, gaussian, lecun};
use crate::rng::SeededRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Flattened action dimension `d` (chunk length × per-step dimension).
    /// Experiment configs leave both dimensions at 0; they are filled from
    /// the task.
    #[serde(default)]
    pub action_dim: usize,
    #[serde(default)]
    pub embed_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_time_dim")]
    pub time_dim: usize,
    #[serde(default = "default_fourier_scale")]
    pub fourier_scale: f64,
    /// Sequence length `S`; the action vector is split into `S` tokens.
    #[serde(default = "default_tokens")]
    pub tokens: usize,
    #[serde(default = "default_true")]
    pub bias: bool,
    #[serde(default)]
    pub zero_init_injection: bool,
}

fn default_hidden() -> usize {
    64
}
fn default_layers() -> usize {
    4
}
fn default_time_dim() -> usize {
    32
}
fn default_fourier_scale() -> f64 {
    0.2
}
fn default_tokens() -> usize {
    1
}
fn default_true() -> bool {
    true
}

impl PolicyConfig {
    pub fn new(action_dim: usize, embed_dim: usize) -> Self {
        Self {
            action_dim,
            embed_dim,
            hidden_dim: default_hidden(),
            layers: default_layers(),
            time_dim: default_time_dim(),
            fourier_scale: default_fourier_scale(),
            tokens: default_tokens(),
            bias: true,
            zero_init_injection: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.action_dim,
            self.embed_dim,
            self.hidden_dim,
            self.layers,
            self.time_dim,
            self.tokens,
        ];
        if dims.contains(&0) {
            return Err(Error::Config(format!(
                "policy dimensions must be positive: {self:?}"
            )));
        }
        if !self.time_dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "time embedding dimension must be even, got {}",
                self.time_dim
            )));
        }
        if self.fourier_scale.is_nan() || self.fourier_scale <= 0.0 {
            return Err(Error::Config("fourier scale must be positive".into()));
        }
        if !self.action_dim.is_multiple_of(self.tokens) {
            return Err(Error::Config(format!(
                "action dimension {} is not divisible by {} tokens",
                self.action_dim, self.tokens
            )));
        }
        Ok(())
    }

    pub fn token_dim(&self) -> usize {
        self.action_dim / self.tokens
    }

    /// Parameters in one injected block.
    pub fn block_size(&self) -> usize {
        let h = self.hidden_dim;
        let mix = if self.tokens > 1 {
            self.tokens * self.tokens
        } else {
            0
        };
        h * h + if self.bias { h } else { 0 } + self.embed_dim * h + mix
    }

    /// Exact trainable parameter count.
    pub fn parameter_count(&self) -> usize {
        let (h, p) = (self.hidden_dim, self.token_dim());
        let b = |n: usize| if self.bias { n } else { 0 };
        (p + self.time_dim) * h + b(h) + self.layers * self.block_size() + h * p + b(p)
    }
}

/// `[sin(2π·scale·f_k·t), cos(2π·scale·f_k·t)]` for the stored frequencies.
pub fn fourier_time_embed(t: f64, freqs: &[f64], scale: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * freqs.len());
    out.extend(freqs.iter().map(|f| (2.0 * PI * scale * f * t).sin()));
    out.extend(freqs.iter().map(|f| (2.0 * PI * scale * f * t).cos()));
    out
}

/// Hidden states of one sample: per layer, `(h, h̄)` as `S × D` matrices
/// captured before and after condition injection.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenTrace {
    pub layers: Vec<(Tensor, Tensor)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct Layout {
    w_x: usize,
    w_t: usize,
    b_in: Option<usize>,
    first_block: usize,
    block_stride: usize,
    w_out: usize,
    b_out: Option<usize>,
}

#[derive(Clone, Copy)]
struct Block {
    w: usize,
    b: Option<usize>,
    inject: usize,
    mix: Option<usize>,
}

/// Layered velocity network with per-layer additive condition injection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityNetwork {
    config: PolicyConfig,
    /// Fixed Fourier frequencies, not trained.
    freqs: Vec<f64>,
    params: ParamSet,
    #[serde(skip, default = "Layout::placeholder")]
    layout: Layout,
}

impl Layout {
    fn placeholder() -> Self {
        Layout {
            w_x: usize::MAX,
            w_t: 0,
            b_in: None,
            first_block: 0,
            block_stride: 0,
            w_out: 0,
            b_out: None,
        }
    }

    fn of(config: &PolicyConfig) -> Self {
        let mut i = 0;
        let mut next = || {
            i += 1;
            i - 1
        };
        let w_x = next();
        let w_t = next();
        let b_in = config.bias.then(&mut next);
        let first_block = w_t + 1 + usize::from(config.bias);
        let block_stride = 2 + usize::from(config.bias) + usize::from(config.tokens > 1);
        let w_out = first_block + config.layers * block_stride;
        let b_out = config.bias.then_some(w_out + 1);
        Layout {
            w_x,
            w_t,
            b_in,
            first_block,
            block_stride,
            w_out,
            b_out,
        }
    }

    fn block(&self, config: &PolicyConfig, l: usize) -> Block {
        let base = self.first_block + l * self.block_stride;
        let mut k = base + 1;
        let b = config.bias.then(|| {
            k += 1;
            k - 1
        });
        let inject = k;
        let mix = (config.tokens > 1).then_some(k + 1);
        Block {
            w: base,
            b,
            inject,
            mix,
        }
    }
}

impl VelocityNetwork {
    pub fn new(config: PolicyConfig, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        let (h, p, de, dt) = (
            config.hidden_dim,
            config.token_dim(),
            config.embed_dim,
            config.time_dim,
        );
        let freqs: Vec<f64> = (0..dt / 2).map(|_| rng.normal()).collect();
        let mut params = ParamSet::new();
        let in_std = 1.0 / ((p + dt) as f64).sqrt();
        params.push("in.w_x", gaussian(p, h, in_std, rng));
        params.push("in.w_t", gaussian(dt, h, in_std, rng));
        if config.bias {
            params.push("in.b", Tensor::zeros(&[1, h]));
        }
        for l in 0..config.layers {
            params.push(format!("block{l}.w"), lecun(h, h, rng));
            if config.bias {
                params.push(format!("block{l}.b"), Tensor::zeros(&[1, h]));
            }
            let inject = if config.zero_init_injection {
                Tensor::zeros(&[de, h])
            } else {
                lecun(de, h, rng)
            };
            params.push(format!("block{l}.inject"), inject);
            if config.tokens > 1 {
                let s = config.tokens;
                let mut eye = Tensor::zeros(&[s, s]);
                for i in 0..s {
                    eye.data_mut()[i * s + i] = 1.0;
                }
                params.push(format!("block{l}.mix"), eye);
            }
        }
        params.push("out.w", lecun(h, p, rng));
        if config.bias {
            params.push("out.b", Tensor::zeros(&[1, p]));
        }
        let layout = Layout::of(&config);
        debug_assert_eq!(params.num_scalars(), config.parameter_count());
        Ok(Self {
            config,
            freqs,
            params,
            layout,
        })
    }

    /// Restores the derived layout after deserialization and checks that the
    /// parameter shapes agree with the config.
    pub fn validated(mut self) -> Result<Self> {
        self.config.validate()?;
        self.layout = Layout::of(&self.config);
        if self.params.num_scalars() != self.config.parameter_count()
            || self.freqs.len() != self.config.time_dim / 2
        {
            return Err(Error::Config(
                "network parameters do not match its configuration".into(),
            ));
        }
        Ok(self)
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.freqs
    }

    pub fn parameter_count(&self) -> usize {
        self.params.num_scalars()
    }

    /// Zeroes and freezes every condition-injection map, making the network
    /// blind to `e` for the rest of its life.
    pub fn zero_injection(&mut self) {
        for l in 0..self.config.layers {
            let idx = self.layout.block(&self.config, l).inject;
            let p = self.params.get_mut(idx);
            p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
            p.frozen = true;
        }
    }

    /// Injection matrix of layer `l` (`embed_dim × hidden_dim`).
    pub fn injection(&self, l: usize) -> &Tensor {
        &self
            .params
            .get(self.layout.block(&self.config, l).inject)
            .value
    }

    fn check_inputs(&self, t: &[f64], x: &Tensor, e: &Tensor) -> Result<()> {
        let b = x.rows();
        if x.shape() != [b, self.config.action_dim] {
            return Err(Error::dim(
                "policy x",
                x.shape(),
                &[b, self.config.action_dim],
            ));
        }
        if e.shape() != [b, self.config.embed_dim] {
            return Err(Error::dim(
                "policy e",
                e.shape(),
                &[b, self.config.embed_dim],
            ));
        }
        if t.len() != b {
            return Err(Error::dim("policy t", &[t.len()], &[b]));
        }
        Ok(())
    }

    /// Records the forward pass; returns the `B × d` output and, when
    /// `trace` is set, the `(h, h̄)` nodes of every layer.
    pub fn forward_on(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        t: &[f64],
        x: &Tensor,
        e: &Tensor,
        trace: bool,
    ) -> Result<(Var, Vec<(Var, Var)>)> {
        self.check_inputs(t, x, e)?;
        let cfg = &self.config;
        let (b, s, p) = (x.rows(), cfg.tokens, cfg.token_dim());
        let rows = b * s;

        let mut temb = Vec::with_capacity(rows * cfg.time_dim);
        let mut erep = Vec::with_capacity(rows * cfg.embed_dim);
        for (i, &ti) in t.iter().enumerate() {
            let f = fourier_time_embed(ti, &self.freqs, cfg.fourier_scale);
            for _ in 0..s {
                temb.extend_from_slice(&f);
                erep.extend_from_slice(e.row_slice(i));
            }
        }
        let xs = tape.constant(x.clone().reshaped(&[rows, p])?);
        let temb = tape.constant(Tensor::matrix(rows, cfg.time_dim, temb)?);
        let erep = tape.constant(Tensor::matrix(rows, cfg.embed_dim, erep)?);

        let lay = &self.layout;
        let hx = tape.matmul(xs, vars[lay.w_x])?;
        let ht = tape.matmul(temb, vars[lay.w_t])?;
        let mut h = tape.add(hx, ht)?;
        if let Some(bi) = lay.b_in {
            h = tape.add_bias(h, vars[bi])?;
        }
        h = tape.tanh(h);

        let mut traced = Vec::new();
        for l in 0..cfg.layers {
            let blk = lay.block(cfg, l);
            let mut g = dense(tape, h, vars[blk.w], blk.b.map(|i| vars[i]))?;
            if let Some(m) = blk.mix {
                g = tape.mix_tokens(g, vars[m], s)?;
            }
            let inj = tape.matmul(erep, vars[blk.inject])?;
            let gbar = tape.add(g, inj)?;
            if trace {
                traced.push((g, gbar));
            }
            h = tape.tanh(gbar);
        }
        let out = dense(tape, h, vars[lay.w_out], lay.b_out.map(|i| vars[i]))?;
        let out = tape.reshape(out, &[b, cfg.action_dim])?;
        Ok((out, traced))
    }

    pub fn forward(&self, t: &[f64], x: &Tensor, e: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.params.bind_frozen(&mut tape);
        let (out, _) = self.forward_on(&mut tape, &vars, t, x, e, false)?;
        Ok(tape.value(out).clone())
    }

    /// Forward pass plus one [`HiddenTrace`] per batch row.
    pub fn forward_traced(
        &self,
        t: &[f64],
        x: &Tensor,
        e: &Tensor,
    ) -> Result<(Tensor, Vec<HiddenTrace>)> {
        let mut tape = Tape::new();
        let vars = self.params.bind_frozen(&mut tape);
        let (out, traced) = self.forward_on(&mut tape, &vars, t, x, e, true)?;
        let (s, hdim) = (self.config.tokens, self.config.hidden_dim);
        let traces = (0..x.rows())
            .map(|i| HiddenTrace {
                layers: traced
                    .iter()
                    .map(|&(g, gbar)| {
                        let slice = |v: Var| {
                            let d = tape.value(v).data();
                            Tensor::matrix(s, hdim, d[i * s * hdim..(i + 1) * s * hdim].to_vec())
                                .expect("block shape")
                        };
                        (slice(g), slice(gbar))
                    })
                    .collect(),
            })
            .collect();
        Ok((tape.value(out).clone(), traces))
    }
}

impl VelocityField for VelocityNetwork {
    fn action_dim(&self) -> usize {
        self.config.action_dim
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn velocity_on(
        &self,
        tape: &mut Tape,
        params: &[Var],
        t: &[f64],
        x: &Tensor,
        e: &Tensor,
    ) -> Result<Var> {
        Ok(self.forward_on(tape, params, t, x, e, false)?.0)
    }
}
