//! End-to-end runs: configuration, two-stage and joint training,
//! evaluation, checkpoints, sweeps and report files.

mod checkpoint;
mod config;
mod eval;
mod report;
mod sweep;
mod trainer;

pub use checkpoint::{
    checkpoint_from_json, checkpoint_to_json, load_checkpoint, save_checkpoint, Checkpoint,
    CHECKPOINT_VERSION,
};
pub use config::{
    AutoencoderSettings, ConditionConfig, DiagnosticsConfig, ExperimentConfig, GridConfig,
    LrSchedule, Pipeline, TrainingConfig,
};
pub use eval::{run_eval, EvalReport};
pub use report::{
    emit_report, learning_curve_svg, read_metrics, read_samples, read_summary, scatter_svg,
    write_metrics, write_samples, write_summary, SummaryRow, SUMMARY_HEADER,
};
pub use sweep::{apply_axis, run_sweep, SweepAxis, SweepReport, SweepRow, PURITY_THRESHOLD};
pub use trainer::{
    load_run, resume_training, run_training, steps_to_threshold, MetricsRecord, Trainer,
    TrainingOutcome,
};
