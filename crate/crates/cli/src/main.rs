use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cocos_core::experiments::{
    emit_report, load_checkpoint, read_metrics, read_samples, run_eval, run_sweep, run_training,
    MetricsRecord, SummaryRow, SweepAxis,
};
use cocos_core::rng::stream;
use cocos_core::{Error, ExperimentConfig, Result, SeededRng, TaskSpec};

#[derive(Parser)]
#[command(
    name = "cocos",
    version,
    about = "Flow-matching policies with condition-dependent sources"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run and write its checkpoint, metrics and plots.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed; overrides the config's.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a checkpoint on a task and print the report as JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Task JSON; defaults to the checkpoint's own task.
        #[arg(long)]
        task: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one run per value of an axis and print a comparison table.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// beta, separation or pipeline.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Regenerate summary and plots from a run directory's metrics.
    Report {
        /// Run directory holding metrics.jsonl.
        #[arg(long)]
        metrics: PathBuf,
    },
}

fn load_config(
    path: &PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if out.is_some() {
        cfg.output = out;
    }
    if let Some(s) = seed {
        cfg.training.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_rows(run: &str, records: &[MetricsRecord]) {
    let fmt = |v: Option<f64>| v.map_or("-".into(), |x| format!("{x:.4}"));
    println!(
        "{:>7} {:>10} {:>8} {:>8} {:>10} {:>10}",
        "step", "loss", "purity", "tv", "cosine", "normscale"
    );
    for r in records {
        let s = SummaryRow::from_record(run, r);
        println!(
            "{:>7} {:>10.5} {:>8.4} {:>8.4} {:>10} {:>10}",
            s.step,
            s.loss,
            s.mean_purity,
            s.divergence,
            fmt(s.cosine_metric),
            fmt(s.norm_scale_metric)
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, out, seed } => {
            let cfg = load_config(&config, out, seed)?;
            let outcome = run_training(cfg)?;
            print_rows("train", &outcome.metrics);
        }
        Command::Eval {
            checkpoint,
            task,
            trials,
            seed,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let task = match task {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| Error::Io { path, source: e })?;
                    serde_json::from_str::<TaskSpec>(&text)
                        .map_err(|e| Error::Config(e.to_string()))?
                }
                None => ckpt.config.task.clone(),
            };
            let report = run_eval(
                &ckpt,
                &task,
                trials,
                &mut SeededRng::new(seed, stream::EVAL),
            )?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
        }
        Command::Sweep {
            config,
            axis,
            values,
            out,
            seed,
        } => {
            let cfg = load_config(&config, out, seed)?;
            let axis: SweepAxis = axis.parse()?;
            let report = run_sweep(&cfg, axis, &values)?;
            print!("{}", report.table());
        }
        Command::Report { metrics } => {
            let records = read_metrics(&metrics.join("metrics.jsonl"))?;
            let samples_path = metrics.join("samples.json");
            let samples = if samples_path.is_file() {
                Some(read_samples(&samples_path)?)
            } else {
                None
            };
            emit_report(&records, samples.as_deref(), &metrics)?;
            let run = metrics
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            print_rows(&run, &records);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
