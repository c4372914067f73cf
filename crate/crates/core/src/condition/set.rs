use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Synthetic condition embeddings `e(c) = anchor + separation · base(c)`.
///
/// `separation` is the distinguishability dial: at 0 every condition maps to
/// the same embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionSet {
    names: Vec<String>,
    base: Vec<Vec<f64>>,
    separation: f64,
    anchor: Vec<f64>,
}

impl ConditionSet {
    pub fn new(
        names: Vec<String>,
        base: Vec<Vec<f64>>,
        separation: f64,
        anchor: Vec<f64>,
    ) -> Result<Self> {
        if names.len() != base.len() || names.is_empty() {
            return Err(Error::Config(format!(
                "{} names for {} base embeddings",
                names.len(),
                base.len()
            )));
        }
        if !(0.0..=1.0).contains(&separation) {
            return Err(Error::Config(format!(
                "separation must lie in [0, 1], got {separation}"
            )));
        }
        let dim = anchor.len();
        for (i, b) in base.iter().enumerate() {
            if b.len() != dim {
                return Err(Error::dim("condition base", &[dim], &[b.len()]));
            }
            let n = norm(b);
            if (n - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("base embedding {i} has norm {n}")));
            }
            for (j, other) in base[..i].iter().enumerate() {
                if b == other {
                    return Err(Error::Config(format!(
                        "base embeddings {j} and {i} coincide"
                    )));
                }
            }
        }
        Ok(Self {
            names,
            base,
            separation,
            anchor,
        })
    }

    /// `k` mutually orthonormal base directions in `dim` dimensions, drawn by
    /// Gram-Schmidt on Gaussian vectors. The anchor, if non-zero, is a random
    /// direction of the given norm.
    pub fn orthonormal(
        names: Vec<String>,
        dim: usize,
        separation: f64,
        anchor_norm: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let k = names.len();
        if k > dim {
            return Err(Error::Config(format!(
                "{k} orthonormal embeddings need dimension >= {k}, got {dim}"
            )));
        }
        let mut base: Vec<Vec<f64>> = Vec::with_capacity(k);
        while base.len() < k {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
            for b in &base {
                let d = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
            let n = norm(&v);
            if n > 1e-6 {
                v.iter_mut().for_each(|x| *x /= n);
                base.push(v);
            }
        }
        let mut anchor: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let n = norm(&anchor);
        anchor.iter_mut().for_each(|x| *x *= anchor_norm / n);
        Self::new(names, base, separation, anchor)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn separation(&self) -> f64 {
        self.separation
    }

    pub fn base(&self, id: usize) -> Result<&[f64]> {
        self.base
            .get(id)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownCondition(id))
    }

    /// Same bases and anchor at a different separation.
    pub fn with_separation(&self, separation: f64) -> Result<Self> {
        Self::new(
            self.names.clone(),
            self.base.clone(),
            separation,
            self.anchor.clone(),
        )
    }

    pub fn embed(&self, id: usize) -> Result<Vec<f64>> {
        let b = self.base(id)?;
        Ok(self
            .anchor
            .iter()
            .zip(b)
            .map(|(a, x)| a + self.separation * x)
            .collect())
    }

    pub fn embeddings(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| self.embed(i).expect("id in range"))
            .collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
