use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::flow::{DatasetSpec, Demonstration, TaskKind};
use crate::rng::SeededRng;

use super::{condition_sequence, counts, one_hot};

/// Goals sit on a circle of this radius.
pub const GOAL_RADIUS: f64 = 1.0;
/// Starts are uniform in a disk of this radius.
pub const START_RADIUS: f64 = 1.5;
/// A rollout succeeds when it ends closer than this to its goal.
pub const SUCCESS_DISTANCE: f64 = 0.1;

/// Per-step displacement limit: a full chunk covers distance 3, enough to
/// cross the start disk to any goal.
pub fn speed_cap(h: usize) -> f64 {
    3.0 / h as f64
}

fn clip(v: [f64; 2], cap: f64) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    if n <= cap {
        v
    } else {
        [v[0] * cap / n, v[1] * cap / n]
    }
}

/// Flattened `[v_1, …, v_h]` of the capped-speed expert heading to `goal`.
pub fn expert_chunk(start: [f64; 2], goal: [f64; 2], h: usize) -> Vec<f64> {
    let cap = speed_cap(h);
    let mut p = start;
    let mut out = Vec::with_capacity(2 * h);
    for _ in 0..h {
        let v = clip([goal[0] - p[0], goal[1] - p[1]], cap);
        p = [p[0] + v[0], p[1] + v[1]];
        out.extend(v);
    }
    out
}

/// Applies the first `steps` displacements of `chunk`, each clipped to the
/// speed cap.
pub fn execute_chunk(start: [f64; 2], chunk: &[f64], steps: usize, h: usize) -> [f64; 2] {
    let cap = speed_cap(h);
    chunk.chunks_exact(2).take(steps).fold(start, |p, v| {
        let v = clip([v[0], v[1]], cap);
        [p[0] + v[0], p[1] + v[1]]
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub final_position: [f64; 2],
    pub distance: f64,
    pub chunks: usize,
    pub success: bool,
}

/// Execute-partial-chunk loop: plan a chunk from the current position,
/// execute its first `h/2` steps, replan, for at most `max_chunks` chunks.
pub fn rollout(
    mut plan: impl FnMut([f64; 2]) -> Result<Vec<f64>>,
    start: [f64; 2],
    goal: [f64; 2],
    h: usize,
    max_chunks: usize,
) -> Result<Rollout> {
    let k = (h / 2).max(1);
    let mut p = start;
    let mut chunks = 0;
    let dist = |p: [f64; 2]| (p[0] - goal[0]).hypot(p[1] - goal[1]);
    while chunks < max_chunks && dist(p) >= SUCCESS_DISTANCE {
        let chunk = plan(p)?;
        if chunk.len() != 2 * h {
            return Err(Error::dim("rollout chunk", &[chunk.len()], &[2 * h]));
        }
        p = execute_chunk(p, &chunk, k, h);
        chunks += 1;
    }
    let distance = dist(p);
    Ok(Rollout {
        final_position: p,
        distance,
        chunks,
        success: distance < SUCCESS_DISTANCE,
    })
}

pub(super) fn goals(k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / k as f64;
            vec![GOAL_RADIUS * a.cos(), GOAL_RADIUS * a.sin()]
        })
        .collect()
}

/// Uniform draw from the start disk.
pub fn random_start(rng: &mut SeededRng) -> [f64; 2] {
    let r = START_RADIUS * rng.uniform().sqrt();
    let a = 2.0 * PI * rng.uniform();
    [r * a.cos(), r * a.sin()]
}

pub(super) fn generate(h: usize, n: usize, k: usize, rng: &mut SeededRng) -> Result<DatasetSpec> {
    if h < 2 {
        return Err(Error::Config(format!("chunk length must be >= 2, got {h}")));
    }
    if k == 0 {
        return Err(Error::Config(
            "point-mass task needs at least one goal".into(),
        ));
    }
    let centers = goals(k);
    let freqs = vec![1.0 / k as f64; k];
    let ids = condition_sequence(&counts(n, &freqs), rng);
    let records = ids
        .into_iter()
        .map(|c| {
            let start = random_start(rng);
            let goal = [centers[c][0], centers[c][1]];
            let mut embedding = one_hot(k, c);
            embedding.extend(start);
            Demonstration {
                condition: c,
                embedding,
                x1: expert_chunk(start, goal, h),
                obs: Some(start.to_vec()),
            }
        })
        .collect();
    let ds = DatasetSpec {
        kind: TaskKind::PointMassChunk,
        action_dim: 2 * h,
        embed_dim: k + 2,
        frequencies: freqs,
        mode_noise: 0.0,
        path_noise: 0.0,
        horizon: Some(h),
        mode_centers: centers,
        mode_of_condition: (0..k).collect(),
        records,
    };
    ds.validate()?;
    Ok(ds)
}
