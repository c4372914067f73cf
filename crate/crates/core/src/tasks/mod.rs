//! Synthetic conditional-generation tasks with exactly known structure.
//!
//! Generated datasets carry one-hot condition embeddings; experiments
//! re-embed them through a [`ConditionSet`](crate::condition::ConditionSet).

mod io;
mod point_mass;

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{DatasetSpec, Demonstration, TaskKind};
use crate::rng::SeededRng;

pub use io::{load_dataset, read_dataset, save_dataset, write_dataset};
pub use point_mass::{
    execute_chunk, expert_chunk, random_start, rollout, speed_cap, Rollout, GOAL_RADIUS,
    START_RADIUS, SUCCESS_DISTANCE,
};

/// Number of goals used by [`make_point_mass_chunks`].
pub const POINT_MASS_GOALS: usize = 4;
/// Std of every Gaussian-mixture mode.
pub const MIXTURE_STD: f64 = 0.1;
/// Radius of the circle carrying the Gaussian-mixture centres.
pub const MIXTURE_RADIUS: f64 = 2.0;

/// Task parameters as they appear in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Total number of demonstrations.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Left/right: frequency of the "left" condition.
    #[serde(default = "default_freq_left")]
    pub freq_left: f64,
    /// Left/right: action noise std. Mixture noise is fixed at 0.1.
    #[serde(default)]
    pub noise: f64,
    /// Mixture: number of modes and conditions.
    #[serde(default = "default_modes")]
    pub modes: usize,
    /// Mixture: action dimension (≥ 2).
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Point-mass: chunk length.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Point-mass: number of goals.
    #[serde(default = "default_goals")]
    pub goals: usize,
    /// Std of the interpolation path noise.
    #[serde(default)]
    pub path_noise: f64,
}

fn default_n() -> usize {
    1000
}
fn default_freq_left() -> f64 {
    0.5
}
fn default_modes() -> usize {
    4
}
fn default_dim() -> usize {
    2
}
fn default_horizon() -> usize {
    8
}
fn default_goals() -> usize {
    POINT_MASS_GOALS
}

impl TaskSpec {
    pub fn new(kind: TaskKind) -> Self {
        Self {
            kind,
            n: default_n(),
            freq_left: default_freq_left(),
            noise: 0.0,
            modes: default_modes(),
            dim: default_dim(),
            horizon: default_horizon(),
            goals: default_goals(),
            path_noise: 0.0,
        }
    }

    pub fn generate(&self, rng: &mut SeededRng) -> Result<DatasetSpec> {
        let mut ds = match self.kind {
            TaskKind::LeftRight => make_left_right(self.n, self.freq_left, self.noise, rng)?,
            TaskKind::GaussianMixture => gaussian_mixture(self.modes, self.dim, self.n, rng)?,
            TaskKind::PointMassChunk => {
                point_mass::generate(self.horizon, self.n, self.goals, rng)?
            }
        };
        if self.path_noise < 0.0 {
            return Err(Error::Config("path noise must be non-negative".into()));
        }
        ds.path_noise = self.path_noise;
        Ok(ds)
    }

    /// Mode radius used by collapse scoring: three target-noise stds.
    pub fn mode_radius(&self) -> f64 {
        let std = match self.kind {
            TaskKind::LeftRight => self.noise,
            TaskKind::GaussianMixture => MIXTURE_STD,
            TaskKind::PointMassChunk => 0.0,
        };
        mode_radius(std)
    }
}

/// `3·std`, floored so noise-free tasks still accept samples near a centre.
pub fn mode_radius(std: f64) -> f64 {
    (3.0 * std).max(MIN_MODE_RADIUS)
}

/// Radius floor for noise-free modes.
pub const MIN_MODE_RADIUS: f64 = 0.25;

/// Splits `n` into per-condition counts proportional to `freqs`, largest
/// remainders first.
fn counts(n: usize, freqs: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = freqs.iter().map(|f| f * n as f64).collect();
    let mut out: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..freqs.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())));
    let missing = n - out.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        out[i] += 1;
    }
    out
}

fn one_hot(k: usize, i: usize) -> Vec<f64> {
    (0..k).map(|j| f64::from(u8::from(i == j))).collect()
}

/// Shuffled condition ids with exactly `counts[c]` copies of each `c`.
fn condition_sequence(counts: &[usize], rng: &mut SeededRng) -> Vec<usize> {
    let mut ids: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
        .collect();
    ids.shuffle(rng);
    ids
}

fn mixture_dataset(
    kind: TaskKind,
    centers: Vec<Vec<f64>>,
    freqs: Vec<f64>,
    noise: f64,
    n: usize,
    rng: &mut SeededRng,
) -> Result<DatasetSpec> {
    let k = centers.len();
    let d = centers[0].len();
    let ids = condition_sequence(&counts(n, &freqs), rng);
    let records = ids
        .into_iter()
        .map(|c| Demonstration {
            condition: c,
            embedding: one_hot(k, c),
            x1: centers[c]
                .iter()
                .map(|m| m + noise * rng.normal())
                .collect(),
            obs: None,
        })
        .collect();
    let ds = DatasetSpec {
        kind,
        action_dim: d,
        embed_dim: k,
        frequencies: freqs,
        mode_noise: noise,
        path_noise: 0.0,
        horizon: None,
        mode_centers: centers,
        mode_of_condition: (0..k).collect(),
        records,
    };
    ds.validate()?;
    Ok(ds)
}

/// One-dimensional task: "left" (condition 0) targets −1, "right"
/// (condition 1) targets +1.
pub fn make_left_right(
    n: usize,
    freq_left: f64,
    noise: f64,
    rng: &mut SeededRng,
) -> Result<DatasetSpec> {
    if !(freq_left > 0.0 && freq_left < 1.0) {
        return Err(Error::Config(format!(
            "left frequency must lie in (0, 1), got {freq_left}"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Config(format!(
            "noise must be non-negative, got {noise}"
        )));
    }
    mixture_dataset(
        TaskKind::LeftRight,
        vec![vec![-1.0], vec![1.0]],
        vec![freq_left, 1.0 - freq_left],
        noise,
        n,
        rng,
    )
}

/// `k` equally likely conditions, each owning one mode on a radius-2 circle
/// in the first two coordinates, with isotropic std 0.1.
pub fn make_gaussian_mixture(
    k: usize,
    d: usize,
    n: usize,
    rng: &mut SeededRng,
) -> Result<DatasetSpec> {
    gaussian_mixture(k, d, n, rng)
}

fn gaussian_mixture(k: usize, d: usize, n: usize, rng: &mut SeededRng) -> Result<DatasetSpec> {
    if k < 2 {
        return Err(Error::Config(format!(
            "mixture needs at least 2 modes, got {k}"
        )));
    }
    if d < 2 {
        return Err(Error::Config(format!(
            "mixture needs dimension >= 2, got {d}"
        )));
    }
    let centers = (0..k)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / k as f64;
            let mut c = vec![0.0; d];
            c[0] = MIXTURE_RADIUS * a.cos();
            c[1] = MIXTURE_RADIUS * a.sin();
            c
        })
        .collect();
    mixture_dataset(
        TaskKind::GaussianMixture,
        centers,
        vec![1.0 / k as f64; k],
        MIXTURE_STD,
        n,
        rng,
    )
}

/// Chunked point-mass imitation with [`POINT_MASS_GOALS`] goals.
pub fn make_point_mass_chunks(h: usize, n: usize, rng: &mut SeededRng) -> Result<DatasetSpec> {
    point_mass::generate(h, n, POINT_MASS_GOALS, rng)
}
