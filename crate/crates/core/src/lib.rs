//! Conditional flow matching with a condition-conditioned source
//! distribution, plus the oracles and diagnostics used to detect loss
//! collapse at desk scale.

pub mod condition;
pub mod diagnostics;
pub mod diff;
pub mod error;
pub mod experiments;
pub mod flow;
mod nn;
pub mod policy;
pub mod rng;
pub mod tasks;

pub use condition::{ConditionAutoencoder, ConditionSet};
pub use diagnostics::{CollapseScore, ResponsivenessReport};
pub use error::{Error, Result};
pub use experiments::{Checkpoint, ExperimentConfig, MetricsRecord};
pub use flow::{DatasetSpec, SourceMode, SourceSpec, TaskKind};
pub use policy::{PolicyConfig, VelocityNetwork};
pub use rng::SeededRng;
pub use tasks::TaskSpec;
