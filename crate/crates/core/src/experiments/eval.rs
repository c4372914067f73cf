use serde::{Deserialize, Serialize};

use crate::condition::ConditionAutoencoder;
use crate::diagnostics::{collapse_score, CollapseScore};
use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::flow::{euler_sample, ConditionEncoder, DatasetSpec, Source, TaskKind, VelocityField};
use crate::policy::VelocityNetwork;
use crate::rng::SeededRng;
use crate::tasks::{execute_chunk, random_start, rollout, TaskSpec};

use super::checkpoint::Checkpoint;
use super::config::ExperimentConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub collapse: CollapseScore,
    /// Point-mass only: fraction of replanning rollouts ending at their goal.
    pub success_rate: Option<f64>,
    pub trials: usize,
}

/// Binds the run's source spec to its encoder, if any.
pub(crate) fn bind_source<'a>(
    config: &ExperimentConfig,
    encoder: Option<&'a ConditionAutoencoder>,
    action_dim: usize,
) -> Result<Source<'a>> {
    Source::new(
        config.effective_source(),
        encoder.map(|a| a as &dyn ConditionEncoder),
        action_dim,
    )
}

/// Generates `n` samples per condition from uniformly drawn records of that
/// condition. Point-mass chunks are executed from their start, so the
/// returned points are final positions.
pub(crate) fn sample_conditions<V: VelocityField + ?Sized>(
    policy: &V,
    source: &Source<'_>,
    ds: &DatasetSpec,
    n: usize,
    euler_steps: usize,
    rng: &mut SeededRng,
) -> Result<Vec<Vec<Vec<f64>>>> {
    (0..ds.num_conditions())
        .map(|c| {
            let pool = ds.indices_of(c);
            if pool.is_empty() {
                return Err(Error::UnknownCondition(c));
            }
            let idx: Vec<usize> = (0..n).map(|_| pool[rng.below(pool.len())]).collect();
            let (e, _) = ds.batch(&idx)?;
            let x = euler_sample(policy, source, &e, euler_steps, rng)?;
            Ok((0..n)
                .map(|i| {
                    let a = x.row_slice(i);
                    match (ds.kind, ds.horizon, &ds.records[idx[i]].obs) {
                        (TaskKind::PointMassChunk, Some(h), Some(o)) => {
                            execute_chunk([o[0], o[1]], a, h, h).to_vec()
                        }
                        _ => a.to_vec(),
                    }
                })
                .collect())
        })
        .collect()
}

pub(crate) fn score(
    config: &ExperimentConfig,
    ds: &DatasetSpec,
    samples: &[Vec<Vec<f64>>],
) -> Result<CollapseScore> {
    collapse_score(
        samples,
        &ds.mode_centers,
        &ds.mode_of_condition,
        &ds.frequencies,
        config.mode_radius(),
    )
}

/// Replanning rollouts from random starts, `per_goal` for every goal.
#[allow(clippy::too_many_arguments)]
pub(crate) fn point_mass_success(
    policy: &VelocityNetwork,
    source: &Source<'_>,
    ds: &DatasetSpec,
    per_goal: usize,
    max_chunks: usize,
    euler_steps: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    let h = ds
        .horizon
        .ok_or_else(|| Error::Config("point-mass dataset without horizon".into()))?;
    let mut successes = 0usize;
    let mut total = 0usize;
    for c in 0..ds.num_conditions() {
        let full = ds.condition_embedding(c)?;
        let cond = full[..full.len() - 2].to_vec();
        let goal = [ds.mode_centers[c][0], ds.mode_centers[c][1]];
        for _ in 0..per_goal {
            let start = random_start(rng);
            let out = rollout(
                |p| {
                    let mut e = cond.clone();
                    e.extend(p);
                    let x = euler_sample(policy, source, &Tensor::row(e), euler_steps, rng)?;
                    Ok(x.into_data())
                },
                start,
                goal,
                h,
                max_chunks,
            )?;
            successes += usize::from(out.success);
            total += 1;
        }
    }
    Ok(successes as f64 / total.max(1) as f64)
}

/// Scores a checkpoint on `task`: `trials` samples per condition and, for
/// point-mass tasks, `trials` rollouts per goal.
pub fn run_eval(
    checkpoint: &Checkpoint,
    task: &TaskSpec,
    trials: usize,
    rng: &mut SeededRng,
) -> Result<EvalReport> {
    if trials == 0 {
        return Err(Error::Config("evaluation needs at least one trial".into()));
    }
    let mut config = checkpoint.config.clone();
    config.task = task.clone();
    let ds = config.dataset()?;
    let pc = checkpoint.policy.config();
    if (pc.action_dim, pc.embed_dim) != (ds.action_dim, ds.embed_dim) {
        return Err(Error::dim(
            "checkpoint vs task",
            &[pc.action_dim, pc.embed_dim],
            &[ds.action_dim, ds.embed_dim],
        ));
    }
    let source = bind_source(&config, checkpoint.encoder.as_ref(), ds.action_dim)?;
    let euler = config.diagnostics.euler_steps;
    let samples = sample_conditions(&checkpoint.policy, &source, &ds, trials, euler, rng)?;
    let collapse = score(&config, &ds, &samples)?;
    let success_rate = match ds.kind {
        TaskKind::PointMassChunk => Some(point_mass_success(
            &checkpoint.policy,
            &source,
            &ds,
            trials,
            config.diagnostics.max_chunks,
            euler,
            rng,
        )?),
        _ => None,
    };
    Ok(EvalReport {
        collapse,
        success_rate,
        trials,
    })
}
