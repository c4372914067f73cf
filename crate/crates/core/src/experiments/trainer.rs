use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::condition::{train_autoencoder, ConditionAutoencoder};
use crate::diagnostics::{
    gradient_difference_probe, responsiveness, v_star_gap, CollapseScore, GradientProbeReport,
    ProbeBatch, ProbeGrid, ResponsivenessReport, DEFAULT_LAYER_WEIGHT, PROBE_BATCH,
};
use crate::diff::{Optimizer, Tape};
use crate::error::{Error, Result};
use crate::flow::{cfmc_loss_on, draw_path_batch, DatasetSpec, PathBatch, TaskKind, VelocityField};
use crate::policy::VelocityNetwork;
use crate::rng::{stream, SeededRng};

use super::checkpoint::{save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
use super::config::{ExperimentConfig, Pipeline};
use super::eval::{bind_source, point_mass_success, sample_conditions, score};
use super::report::{emit_report, write_samples};

/// One evaluation point of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    /// Mean training loss since the previous evaluation.
    pub loss: f64,
    pub collapse: CollapseScore,
    pub success_rate: Option<f64>,
    pub v_star_gap: Option<f64>,
    pub responsiveness: Option<ResponsivenessReport>,
    pub gradient_probe: Option<GradientProbeReport>,
    /// Seconds since the run started; excluded from determinism checks.
    pub wall_time: f64,
}

/// Result of [`run_training`].
#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<MetricsRecord>,
    /// Samples per condition from the last evaluation.
    pub samples: Vec<Vec<Vec<f64>>>,
}

/// State of a single training run. Every random draw comes from a stream
/// owned by the trainer, so the run is a pure function of its config.
pub struct Trainer {
    config: ExperimentConfig,
    dataset: DatasetSpec,
    embeddings: Vec<Vec<f64>>,
    policy: VelocityNetwork,
    policy_optimizer: Optimizer,
    encoder: Option<ConditionAutoencoder>,
    encoder_optimizer: Option<Optimizer>,
    step: usize,
    train_rng: SeededRng,
    ae_rng: SeededRng,
    window: Vec<f64>,
    probe: ProbeBatch,
    samples: Vec<Vec<Vec<f64>>>,
    started: Instant,
}

#[derive(Serialize)]
struct NonFiniteDump<'a> {
    step: usize,
    loss: f64,
    parameter_norm: f64,
    t: &'a [f64],
    x0: &'a [f64],
    xt: &'a [f64],
    u: &'a [f64],
    e: &'a [f64],
}

impl Trainer {
    /// Fresh run: initializes every component and, when the source needs
    /// an encoder, pre-trains it.
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.training.seed;
        let dataset = config.dataset()?;
        let policy = VelocityNetwork::new(
            config.policy_config(&dataset),
            &mut SeededRng::new(seed, stream::POLICY_INIT),
        )?;
        let policy_optimizer = Optimizer::adam(config.training.lr)?;
        let mut ae_rng = SeededRng::new(seed, stream::AE_TRAIN);
        let embeddings: Vec<Vec<f64>> = dataset
            .records
            .iter()
            .map(|r| r.embedding.clone())
            .collect();
        let (encoder, encoder_optimizer) = if config.source.needs_encoder() {
            let mut ae = ConditionAutoencoder::new(
                config.autoencoder_config(&dataset),
                &mut SeededRng::new(seed, stream::AE_INIT),
            )?;
            let mut opt = Optimizer::adam(config.autoencoder.lr)?;
            train_autoencoder(
                &mut ae,
                &embeddings,
                config.autoencoder.steps,
                &mut opt,
                &mut ae_rng,
            )?;
            ae.sync_ema();
            (Some(ae), Some(opt))
        } else {
            (None, None)
        };
        let probe = ProbeBatch::draw(&dataset, PROBE_BATCH, config.diagnostics.probe_seed)?;
        Ok(Self {
            train_rng: SeededRng::new(seed, stream::TRAIN),
            config,
            dataset,
            embeddings,
            policy,
            policy_optimizer,
            encoder,
            encoder_optimizer,
            step: 0,
            ae_rng,
            window: Vec::new(),
            probe,
            samples: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        ckpt.config.validate()?;
        let dataset = ckpt.config.dataset()?;
        let pc = ckpt.policy.config();
        if (pc.action_dim, pc.embed_dim) != (dataset.action_dim, dataset.embed_dim) {
            return Err(Error::dim(
                "checkpoint policy",
                &[pc.action_dim, pc.embed_dim],
                &[dataset.action_dim, dataset.embed_dim],
            ));
        }
        if ckpt.config.source.needs_encoder() != ckpt.encoder.is_some() {
            return Err(Error::Config(
                "checkpoint encoder does not match its source".into(),
            ));
        }
        let embeddings = dataset
            .records
            .iter()
            .map(|r| r.embedding.clone())
            .collect();
        let probe = ProbeBatch::draw(&dataset, PROBE_BATCH, ckpt.config.diagnostics.probe_seed)?;
        Ok(Self {
            config: ckpt.config,
            dataset,
            embeddings,
            policy: ckpt.policy,
            policy_optimizer: ckpt.policy_optimizer,
            encoder: ckpt.encoder,
            encoder_optimizer: ckpt.encoder_optimizer,
            step: ckpt.step,
            train_rng: SeededRng::from_state(&ckpt.train_rng),
            ae_rng: SeededRng::from_state(&ckpt.ae_rng),
            window: ckpt.window_losses,
            probe,
            samples: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            step: self.step,
            policy: self.policy.clone(),
            policy_optimizer: self.policy_optimizer.clone(),
            encoder: self.encoder.clone(),
            encoder_optimizer: self.encoder_optimizer.clone(),
            train_rng: self.train_rng.state(),
            ae_rng: self.ae_rng.state(),
            window_losses: self.window.clone(),
        }
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn dataset(&self) -> &DatasetSpec {
        &self.dataset
    }

    pub fn policy(&self) -> &VelocityNetwork {
        &self.policy
    }

    pub fn encoder(&self) -> Option<&ConditionAutoencoder> {
        self.encoder.as_ref()
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.config.training.steps
    }

    /// Samples from the most recent evaluation.
    pub fn last_samples(&self) -> &[Vec<Vec<f64>>] {
        &self.samples
    }

    fn joint_encoder_update(&mut self) -> Result<()> {
        let k = self.config.autoencoder.joint_updates_per_step;
        if let (Some(ae), Some(opt)) = (self.encoder.as_mut(), self.encoder_optimizer.as_mut()) {
            train_autoencoder(ae, &self.embeddings, k, opt, &mut self.ae_rng).map_err(
                |e| match e {
                    Error::NonFinite { what, .. } => Error::NonFinite {
                        step: self.step,
                        what,
                    },
                    other => other,
                },
            )?;
            ae.ema_update();
        }
        Ok(())
    }

    fn dump_nonfinite(&self, loss: f64, batch: &PathBatch, e: &crate::diff::Tensor) -> Error {
        let parameter_norm = self.policy.params().value_norm();
        if let Some(dir) = &self.config.output {
            let dump = NonFiniteDump {
                step: self.step,
                loss,
                parameter_norm,
                t: &batch.t,
                x0: batch.x0.data(),
                xt: batch.xt.data(),
                u: batch.u.data(),
                e: e.data(),
            };
            // Best effort: the abort itself is the primary signal.
            let _ = std::fs::create_dir_all(dir);
            let _ = std::fs::write(
                dir.join("nonfinite.json"),
                serde_json::to_string(&dump).unwrap_or_default(),
            );
        }
        Error::NonFinite {
            step: self.step,
            what: format!("training loss {loss} (parameter norm {parameter_norm})"),
        }
    }

    /// One policy update, preceded by the encoder update in joint runs.
    /// Returns the batch loss.
    pub fn train_step(&mut self) -> Result<f64> {
        if self.config.training.pipeline == Pipeline::JointEma {
            self.joint_encoder_update()?;
        }
        let n = self.dataset.records.len();
        let idx: Vec<usize> = (0..self.config.training.batch_size)
            .map(|_| self.train_rng.below(n))
            .collect();
        let (e, x1) = self.dataset.batch(&idx)?;
        let source = bind_source(&self.config, self.encoder.as_ref(), self.dataset.action_dim)?;
        let batch = draw_path_batch(
            &source,
            &e,
            &x1,
            self.dataset.path_noise,
            &mut self.train_rng,
        )?;
        let mut tape = Tape::new();
        let vars = self.policy.params().bind(&mut tape);
        let loss = cfmc_loss_on(&self.policy, &mut tape, &vars, &e, &batch)?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(self.dump_nonfinite(value, &batch, &e));
        }
        tape.backward(loss)?;
        let t = &self.config.training;
        self.policy_optimizer.lr = t.lr_schedule.at(t.lr, self.step, t.steps);
        let params = self.policy.params_mut();
        params.accumulate(&tape, &vars);
        self.policy_optimizer.step(params)?;
        params.zero_grad();
        self.step += 1;
        self.window.push(value);
        Ok(value)
    }

    /// Evaluation at the current step. Draws only from streams keyed by the
    /// step, so evaluating never perturbs training.
    pub fn evaluate(&mut self) -> Result<MetricsRecord> {
        let seed = self.config.training.seed;
        let mut rng = SeededRng::keyed(seed, stream::EVAL, self.step as u64);
        let ds = &self.dataset;
        let diag = &self.config.diagnostics;
        let source = bind_source(&self.config, self.encoder.as_ref(), ds.action_dim)?;
        let samples = sample_conditions(
            &self.policy,
            &source,
            ds,
            diag.eval_samples,
            diag.euler_steps,
            &mut rng,
        )?;
        let collapse = score(&self.config, ds, &samples)?;
        let success_rate = match ds.kind {
            TaskKind::PointMassChunk => Some(point_mass_success(
                &self.policy,
                &source,
                ds,
                diag.rollouts,
                diag.max_chunks,
                diag.euler_steps,
                &mut rng,
            )?),
            _ => None,
        };
        let v_star = if diag.v_star_gap {
            Some(v_star_gap(&self.policy, ds, &source, &self.grid())?)
        } else {
            None
        };
        let resp = if diag.responsiveness {
            Some(responsiveness(
                &self.policy,
                &self.probe,
                DEFAULT_LAYER_WEIGHT,
            )?)
        } else {
            None
        };
        let grad = if diag.gradient_probe && ds.num_conditions() >= 2 {
            let mut probe_rng = SeededRng::keyed(seed, stream::PROBE, self.step as u64);
            Some(gradient_difference_probe(
                &self.policy,
                ds,
                &source,
                0,
                1,
                diag.gradient_batch,
                &mut probe_rng,
            )?)
        } else {
            None
        };
        let loss = if self.window.is_empty() {
            f64::NAN
        } else {
            self.window.iter().sum::<f64>() / self.window.len() as f64
        };
        self.window.clear();
        self.samples = samples;
        Ok(MetricsRecord {
            step: self.step,
            loss,
            collapse,
            success_rate,
            v_star_gap: v_star,
            responsiveness: resp,
            gradient_probe: grad,
            wall_time: self.started.elapsed().as_secs_f64(),
        })
    }

    /// Probe grid along the first action coordinate.
    pub fn grid(&self) -> ProbeGrid {
        let g = &self.config.diagnostics.grid;
        let d = self.dataset.action_dim;
        let mut grid = ProbeGrid::line(g.times.clone(), g.lo, g.hi, g.points);
        for p in &mut grid.points {
            p.resize(d, 0.0);
        }
        grid
    }

    /// Trains until `config.training.steps`, evaluating every `eval_every`
    /// steps. Checkpoints are written at every evaluation when an output
    /// directory is configured.
    pub fn run(&mut self) -> Result<Vec<MetricsRecord>> {
        let every = self.config.training.eval_every;
        let mut records = Vec::new();
        while !self.is_finished() {
            self.train_step()?;
            if self.step.is_multiple_of(every) {
                records.push(self.evaluate()?);
                if let Some(dir) = &self.config.output {
                    save_checkpoint(&self.checkpoint(), dir.join("checkpoint.json"))?;
                }
            }
        }
        Ok(records)
    }
}

fn prepare_output(config: &ExperimentConfig) -> Result<()> {
    if let Some(dir) = &config.output {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        config.save(dir.join("config.json"))?;
    }
    Ok(())
}

/// Runs a full training and, with an output directory, writes the config,
/// the final checkpoint, the metrics stream, final samples and plots.
pub fn run_training(config: ExperimentConfig) -> Result<TrainingOutcome> {
    prepare_output(&config)?;
    let mut trainer = Trainer::new(config)?;
    let metrics = trainer.run()?;
    finish(trainer, metrics)
}

/// Continues a run from a checkpoint to its configured step count.
pub fn resume_training(ckpt: Checkpoint) -> Result<TrainingOutcome> {
    prepare_output(&ckpt.config)?;
    let mut trainer = Trainer::from_checkpoint(ckpt)?;
    let metrics = trainer.run()?;
    finish(trainer, metrics)
}

fn finish(trainer: Trainer, metrics: Vec<MetricsRecord>) -> Result<TrainingOutcome> {
    let checkpoint = trainer.checkpoint();
    if let Some(dir) = &trainer.config.output {
        save_checkpoint(&checkpoint, dir.join("checkpoint.json"))?;
        if !metrics.is_empty() {
            emit_report(&metrics, Some(&trainer.samples), dir)?;
            write_samples(&trainer.samples, &dir.join("samples.json"))?;
        }
    }
    Ok(TrainingOutcome {
        checkpoint,
        metrics,
        samples: trainer.samples,
    })
}

/// First evaluated step whose mean purity reaches `threshold`.
pub fn steps_to_threshold(records: &[MetricsRecord], threshold: f64) -> Option<usize> {
    records
        .iter()
        .find(|r| r.collapse.mean_purity >= threshold)
        .map(|r| r.step)
}

/// Loads a run directory's config and checkpoint.
pub fn load_run(dir: impl AsRef<Path>) -> Result<Checkpoint> {
    super::checkpoint::load_checkpoint(dir.as_ref().join("checkpoint.json"))
}
