use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::condition::{AutoencoderConfig, ConditionSet};
use crate::error::{Error, Result};
use crate::flow::{DatasetSpec, SourceMode, SourceSpec, TaskKind, DEFAULT_EULER_STEPS};
use crate::policy::PolicyConfig;
use crate::rng::{stream, SeededRng};
use crate::tasks::TaskSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    /// Train the autoencoder, freeze it, then train the policy.
    TwoStage,
    /// Interleave autoencoder and policy updates; the source reads the EMA
    /// encoder.
    JointEma,
}

/// Policy learning-rate schedule over the configured step count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine from `lr` at step 0 down to 0 at the last step.
    Cosine,
}

impl LrSchedule {
    /// Learning rate for the update that follows `step` completed updates.
    pub fn at(self, lr: f64, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => lr,
            LrSchedule::Cosine => {
                let frac = step as f64 / total.max(1) as f64;
                0.5 * lr * (1.0 + (std::f64::consts::PI * frac.min(1.0)).cos())
            }
        }
    }
}

/// Synthetic embeddings fed to the policy in place of the task's one-hot
/// condition codes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionConfig {
    #[serde(default = "default_condition_dim")]
    pub dim: usize,
    #[serde(default = "one")]
    pub separation: f64,
    #[serde(default)]
    pub anchor_norm: f64,
}

impl Default for ConditionConfig {
    fn default() -> Self {
        Self {
            dim: default_condition_dim(),
            separation: 1.0,
            anchor_norm: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoencoderSettings {
    /// Pre-training steps before policy training. Two-stage runs need at
    /// least one; joint runs may start from the initialization.
    #[serde(default = "default_ae_steps")]
    pub steps: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub hidden: Option<usize>,
    #[serde(default = "default_momentum")]
    pub ema_momentum: f64,
    #[serde(default = "default_kl")]
    pub kl_weight: f64,
    /// Joint pipeline: autoencoder steps per policy step. Zero keeps the
    /// pre-trained encoder fixed while the EMA copy still refreshes.
    #[serde(default = "one_usize")]
    pub joint_updates_per_step: usize,
}

impl Default for AutoencoderSettings {
    fn default() -> Self {
        Self {
            steps: default_ae_steps(),
            lr: default_lr(),
            hidden: None,
            ema_momentum: default_momentum(),
            kl_weight: default_kl(),
            joint_updates_per_step: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default = "default_pipeline")]
    pub pipeline: Pipeline,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            steps: default_steps(),
            batch_size: default_batch(),
            lr: default_lr(),
            seed: 0,
            eval_every: default_eval_every(),
            pipeline: Pipeline::TwoStage,
            lr_schedule: LrSchedule::Constant,
        }
    }
}

/// Evaluation points `times × linspace(lo, hi, points)` along the first
/// action coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub times: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            times: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            lo: -1.5,
            hi: 1.5,
            points: 31,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Generated samples per condition at every evaluation.
    #[serde(default = "default_eval_samples")]
    pub eval_samples: usize,
    #[serde(default = "default_euler")]
    pub euler_steps: usize,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_probe_seed")]
    pub probe_seed: u64,
    #[serde(default = "default_probe_batch")]
    pub gradient_batch: usize,
    /// Separations used by the gradient-contraction sweep.
    #[serde(default = "default_separations")]
    pub separations: Vec<f64>,
    /// Point-mass rollouts per goal at every evaluation.
    #[serde(default = "default_rollouts")]
    pub rollouts: usize,
    /// Replanning budget per rollout.
    #[serde(default = "default_max_chunks")]
    pub max_chunks: usize,
    #[serde(default = "yes")]
    pub responsiveness: bool,
    #[serde(default = "yes")]
    pub v_star_gap: bool,
    #[serde(default = "yes")]
    pub gradient_probe: bool,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            eval_samples: default_eval_samples(),
            euler_steps: default_euler(),
            grid: GridConfig::default(),
            probe_seed: default_probe_seed(),
            gradient_batch: default_probe_batch(),
            separations: default_separations(),
            rollouts: default_rollouts(),
            max_chunks: default_max_chunks(),
            responsiveness: true,
            v_star_gap: true,
            gradient_probe: true,
        }
    }
}

/// Everything that determines a run. Fixed config and seed give a
/// bit-identical run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskSpec,
    #[serde(default)]
    pub conditions: ConditionConfig,
    #[serde(default)]
    pub source: SourceSpec,
    #[serde(default)]
    pub autoencoder: AutoencoderSettings,
    #[serde(default = "default_policy")]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_condition_dim() -> usize {
    8
}
fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_ae_steps() -> usize {
    2000
}
fn default_lr() -> f64 {
    1e-3
}
fn default_momentum() -> f64 {
    0.999
}
fn default_kl() -> f64 {
    1e-3
}
fn default_steps() -> usize {
    5000
}
fn default_batch() -> usize {
    256
}
fn default_eval_every() -> usize {
    500
}
fn default_pipeline() -> Pipeline {
    Pipeline::TwoStage
}
fn default_eval_samples() -> usize {
    200
}
fn default_euler() -> usize {
    DEFAULT_EULER_STEPS
}
fn default_probe_seed() -> u64 {
    2024
}
fn default_probe_batch() -> usize {
    64
}
fn default_separations() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 1.0]
}
fn default_rollouts() -> usize {
    10
}
fn default_max_chunks() -> usize {
    4
}
fn default_policy() -> PolicyConfig {
    PolicyConfig::new(0, 0)
}

impl ExperimentConfig {
    pub fn new(task: TaskSpec) -> Self {
        Self {
            task,
            conditions: ConditionConfig::default(),
            source: SourceSpec::standard(),
            autoencoder: AutoencoderSettings::default(),
            policy: default_policy(),
            training: TrainingConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.training;
        if t.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                t.lr
            )));
        }
        if t.steps > 0 && (t.eval_every == 0 || !t.steps.is_multiple_of(t.eval_every)) {
            return Err(Error::Config(format!(
                "eval_every ({}) must divide steps ({})",
                t.eval_every, t.steps
            )));
        }
        self.source.validate()?;
        if self.source.needs_encoder() {
            let ae = &self.autoencoder;
            if self.training.pipeline == Pipeline::TwoStage && ae.steps == 0 {
                return Err(Error::Config(
                    "two-stage training needs autoencoder steps".into(),
                ));
            }
            if !(ae.lr > 0.0 && ae.lr.is_finite()) {
                return Err(Error::Config(
                    "autoencoder learning rate must be positive".into(),
                ));
            }
        }
        let d = &self.diagnostics;
        if d.eval_samples == 0 || d.euler_steps == 0 {
            return Err(Error::Config(
                "evaluation needs samples and Euler steps".into(),
            ));
        }
        if d.grid.times.iter().any(|t| !(0.0..1.0).contains(t)) || d.grid.points == 0 {
            return Err(Error::Config("probe grid times must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Whether the source reads the encoder's EMA copy.
    pub fn uses_ema_source(&self) -> bool {
        self.training.pipeline == Pipeline::JointEma
    }

    /// Source spec as used for sampling, with the EMA flag set by the
    /// pipeline.
    pub fn effective_source(&self) -> SourceSpec {
        let mut s = self.source;
        s.ema = self.source.needs_encoder() && self.uses_ema_source();
        s
    }

    /// Generates the task data and re-embeds it through the configured
    /// condition set.
    pub fn dataset(&self) -> Result<DatasetSpec> {
        let seed = self.training.seed;
        let ds = self
            .task
            .generate(&mut SeededRng::new(seed, stream::DATA))?;
        let names = (0..ds.num_conditions()).map(|c| format!("c{c}")).collect();
        let c = &self.conditions;
        let cs = ConditionSet::orthonormal(
            names,
            c.dim,
            c.separation,
            c.anchor_norm,
            &mut SeededRng::new(seed, stream::CONDITIONS),
        )?;
        ds.reembedded(&cs)
    }

    pub fn policy_config(&self, ds: &DatasetSpec) -> PolicyConfig {
        PolicyConfig {
            action_dim: ds.action_dim,
            embed_dim: ds.embed_dim,
            ..self.policy.clone()
        }
    }

    pub fn autoencoder_config(&self, ds: &DatasetSpec) -> AutoencoderConfig {
        let a = &self.autoencoder;
        AutoencoderConfig {
            embed_dim: ds.embed_dim,
            latent_dim: ds.action_dim,
            hidden: a.hidden,
            ema_momentum: a.ema_momentum,
            vae: self.source.mode == SourceMode::CocosVae,
            kl_weight: a.kl_weight,
        }
    }

    /// Mode radius used when scoring generated samples.
    pub fn mode_radius(&self) -> f64 {
        match self.task.kind {
            TaskKind::PointMassChunk => crate::tasks::MIN_MODE_RADIUS,
            _ => self.task.mode_radius(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Pretty JSON with every default spelled out.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}
