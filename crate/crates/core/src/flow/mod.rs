//! Linear-interpolation flow matching: source distributions, the
//! conditional training loss, Euler sampling and closed-form velocity
//! oracles.

mod dataset;
mod oracle;
mod path;
mod source;

pub use dataset::{DatasetSpec, Demonstration, TaskKind};
pub use oracle::{collapsed_velocity_oracle, marginal_velocity_oracle, VelocityOracle};
pub use path::{
    cfmc_loss, cfmc_loss_on, draw_path_batch, euler_integrate, euler_sample, interpolate,
    sample_time, FnField, PathBatch, PathSample, VelocityField,
};
pub use source::{sample_source, ConditionEncoder, Source, SourceMode, SourceMoments, SourceSpec};

/// Default number of Euler steps at inference.
pub const DEFAULT_EULER_STEPS: usize = 10;

#[cfg(test)]
mod tests;
