use serde::{Deserialize, Serialize};

use crate::condition::ConditionSet;
use crate::diff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    LeftRight,
    GaussianMixture,
    PointMassChunk,
}

/// One condition/action pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    #[serde(rename = "c")]
    pub condition: usize,
    /// Condition embedding, with the observation appended when present.
    #[serde(rename = "e")]
    pub embedding: Vec<f64>,
    pub x1: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obs: Option<Vec<f64>>,
}

/// Empirical joint distribution `q(x1, c)` plus the task structure needed by
/// the oracles and the evaluators.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub kind: TaskKind,
    pub action_dim: usize,
    pub embed_dim: usize,
    /// Sampling frequency of each condition; sums to 1.
    pub frequencies: Vec<f64>,
    /// Std of the per-mode action noise.
    pub mode_noise: f64,
    /// Std `σ` of the interpolation path noise.
    pub path_noise: f64,
    /// Chunk length for point-mass tasks.
    pub horizon: Option<usize>,
    /// Target modes; for point-mass tasks these are the goal positions.
    pub mode_centers: Vec<Vec<f64>>,
    /// Mode assigned to each condition.
    pub mode_of_condition: Vec<usize>,
    pub records: Vec<Demonstration>,
}

impl DatasetSpec {
    pub fn num_conditions(&self) -> usize {
        self.frequencies.len()
    }

    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.frequencies.iter().sum();
        if !self.frequencies.is_empty() && (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("frequencies sum to {total}, not 1")));
        }
        if self.mode_of_condition.len() != self.frequencies.len() {
            return Err(Error::Config(format!(
                "{} mode assignments for {} conditions",
                self.mode_of_condition.len(),
                self.frequencies.len()
            )));
        }
        if self.path_noise < 0.0 {
            return Err(Error::Config("path noise must be non-negative".into()));
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.x1.len() != self.action_dim {
                return Err(Error::Parse {
                    record: i,
                    message: format!(
                        "action has dimension {}, expected {}",
                        r.x1.len(),
                        self.action_dim
                    ),
                });
            }
            if r.embedding.len() != self.embed_dim {
                return Err(Error::Parse {
                    record: i,
                    message: format!(
                        "embedding has dimension {}, expected {}",
                        r.embedding.len(),
                        self.embed_dim
                    ),
                });
            }
            if r.condition >= self.frequencies.len() {
                return Err(Error::UnknownCondition(r.condition));
            }
        }
        Ok(())
    }

    /// Replaces every record's embedding with `cs.embed(c)` followed by the
    /// record's observation.
    pub fn embed_with(&mut self, cs: &ConditionSet) -> Result<()> {
        let obs_dim = self
            .records
            .first()
            .and_then(|r| r.obs.as_ref().map(Vec::len))
            .unwrap_or(0);
        for r in &mut self.records {
            let mut e = cs.embed(r.condition)?;
            if let Some(o) = &r.obs {
                e.extend_from_slice(o);
            }
            r.embedding = e;
        }
        self.embed_dim = cs.dim() + obs_dim;
        Ok(())
    }

    /// Copy embedded with a different condition set.
    pub fn reembedded(&self, cs: &ConditionSet) -> Result<Self> {
        let mut ds = self.clone();
        ds.embed_with(cs)?;
        Ok(ds)
    }

    /// Indices of records carrying condition `c`.
    pub fn indices_of(&self, c: usize) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.condition == c)
            .map(|(i, _)| i)
            .collect()
    }

    /// Embedding of the first record with condition `c`.
    pub fn condition_embedding(&self, c: usize) -> Result<Vec<f64>> {
        self.records
            .iter()
            .find(|r| r.condition == c)
            .map(|r| r.embedding.clone())
            .ok_or(Error::UnknownCondition(c))
    }

    /// Gathers embeddings and actions of the given records.
    pub fn batch(&self, idx: &[usize]) -> Result<(Tensor, Tensor)> {
        let mut e = Vec::with_capacity(idx.len() * self.embed_dim);
        let mut x = Vec::with_capacity(idx.len() * self.action_dim);
        for &i in idx {
            let r = &self.records[i];
            e.extend_from_slice(&r.embedding);
            x.extend_from_slice(&r.x1);
        }
        Ok((
            Tensor::matrix(idx.len(), self.embed_dim, e)?,
            Tensor::matrix(idx.len(), self.action_dim, x)?,
        ))
    }
}
