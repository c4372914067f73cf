use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::condition::ConditionAutoencoder;
use crate::diff::Optimizer;
use crate::error::{Error, Result};
use crate::policy::VelocityNetwork;
use crate::rng::RngState;

use super::config::ExperimentConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Complete training state: resuming from it continues bit-identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: ExperimentConfig,
    /// Policy steps taken so far.
    pub step: usize,
    pub policy: VelocityNetwork,
    pub policy_optimizer: Optimizer,
    /// Live and EMA encoder weights; absent for the standard source.
    pub encoder: Option<ConditionAutoencoder>,
    pub encoder_optimizer: Option<Optimizer>,
    pub train_rng: RngState,
    pub ae_rng: RngState,
    /// Training losses since the last evaluation.
    pub window_losses: Vec<f64>,
}

pub fn checkpoint_to_json(ckpt: &Checkpoint) -> String {
    serde_json::to_string(ckpt).expect("checkpoint serializes")
}

pub fn checkpoint_from_json(text: &str) -> Result<Checkpoint> {
    let parse = |e: serde_json::Error| Error::Parse {
        record: 0,
        message: e.to_string(),
    };
    let value: serde_json::Value = serde_json::from_str(text).map_err(parse)?;
    let found = value
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Parse {
            record: 0,
            message: "checkpoint has no version".into(),
        })?;
    if found != u64::from(CHECKPOINT_VERSION) {
        return Err(Error::Incompatible {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: CHECKPOINT_VERSION,
        });
    }
    let mut ckpt: Checkpoint = serde_json::from_value(value).map_err(parse)?;
    ckpt.policy = ckpt.policy.validated().map_err(|e| Error::Parse {
        record: 0,
        message: e.to_string(),
    })?;
    Ok(ckpt)
}

/// Writes through a sibling temporary file so a crash never leaves a
/// truncated checkpoint behind.
pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, checkpoint_to_json(ckpt)).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_json(&text)
}
