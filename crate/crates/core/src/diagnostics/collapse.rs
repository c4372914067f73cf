use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

use super::responsiveness::cos;

/// Fewest samples per condition accepted by [`collapse_score`].
pub const MIN_COLLAPSE_SAMPLES: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseScore {
    /// Per condition: fraction of samples per mode, with the off-mode
    /// fraction as the final entry.
    pub histograms: Vec<Vec<f64>>,
    /// Per condition: fraction landing in the condition's own mode.
    pub purity: Vec<f64>,
    pub mean_purity: f64,
    pub off_mode: Vec<f64>,
    /// Total variation between the frequency-weighted pooled histogram and
    /// the dataset's mode mixture.
    pub divergence: f64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Assigns each sample to the nearest mode centre within `radius` and
/// compares the per-condition histograms to the data.
pub fn collapse_score(
    samples: &[Vec<Vec<f64>>],
    centers: &[Vec<f64>],
    mode_of_condition: &[usize],
    frequencies: &[f64],
    radius: f64,
) -> Result<CollapseScore> {
    if samples.is_empty() || centers.is_empty() {
        return Err(Error::Contract(
            "collapse score needs samples and modes".into(),
        ));
    }
    if samples.len() != mode_of_condition.len() || samples.len() != frequencies.len() {
        return Err(Error::dim(
            "collapse score",
            &[samples.len()],
            &[mode_of_condition.len()],
        ));
    }
    let k = centers.len();
    let r2 = radius * radius;
    let mut histograms = Vec::with_capacity(samples.len());
    let mut purity = Vec::with_capacity(samples.len());
    let mut off_mode = Vec::with_capacity(samples.len());
    for (c, xs) in samples.iter().enumerate() {
        if xs.len() < MIN_COLLAPSE_SAMPLES {
            return Err(Error::Contract(format!(
                "condition {c} has {} samples, need at least {MIN_COLLAPSE_SAMPLES}",
                xs.len()
            )));
        }
        let mut hist = vec![0.0; k + 1];
        for x in xs {
            let (m, d) = centers
                .iter()
                .enumerate()
                .map(|(m, ctr)| (m, dist2(x, ctr)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("non-empty centres");
            hist[if d <= r2 { m } else { k }] += 1.0;
        }
        hist.iter_mut().for_each(|h| *h /= xs.len() as f64);
        purity.push(hist[mode_of_condition[c]]);
        off_mode.push(hist[k]);
        histograms.push(hist);
    }
    let mut pooled = vec![0.0; k + 1];
    let mut target = vec![0.0; k + 1];
    for (c, hist) in histograms.iter().enumerate() {
        for (p, h) in pooled.iter_mut().zip(hist) {
            *p += frequencies[c] * h;
        }
        target[mode_of_condition[c]] += frequencies[c];
    }
    let divergence = 0.5
        * pooled
            .iter()
            .zip(&target)
            .map(|(p, q)| (p - q).abs())
            .sum::<f64>();
    let mean_purity = purity.iter().sum::<f64>() / purity.len() as f64;
    Ok(CollapseScore {
        histograms,
        purity,
        mean_purity,
        off_mode,
        divergence: divergence.min(1.0),
    })
}

/// Mean cosine similarity over `pairs` random pairs of distinct features.
pub fn prefusion_similarity(
    features: &[Vec<f64>],
    pairs: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    let n = features.len();
    if n < 2 || pairs == 0 {
        return Err(Error::Contract(
            "need at least two features and one pair".into(),
        ));
    }
    let mut total = 0.0;
    for _ in 0..pairs {
        let i = rng.below(n);
        let j = (i + 1 + rng.below(n - 1)) % n;
        total += cos(&features[i], &features[j]);
    }
    Ok(total / pairs as f64)
}
