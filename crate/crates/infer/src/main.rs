use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use infer::config::{prepare, ExperimentConfig};
use infer::experiment::{run_experiment, run_repeats};
use infer::summarize::summarize_dir;
use infer::Error;

/// Reproducible Bayesian inference experiments: particle mirror descent and
/// a Langevin baseline, driven by one config file per experiment.
#[derive(Parser)]
#[command(name = "infer", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Run this many seeds concurrently, writing seed-<n> subdirectories.
        #[arg(long)]
        repeat: Option<u64>,
        /// Output directory; overrides the config and the INFER_OUT variable.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config and its data without running inference.
    Validate { config: PathBuf },
    /// Aggregate per-seed metrics under a run directory into medians.
    Summarize { dir: PathBuf },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> infer::Result<()> {
    match cli.command {
        Command::Run {
            config: path,
            repeat,
            out,
        } => {
            let config = ExperimentConfig::from_path(&path)?;
            let out_dir = out
                .or_else(|| std::env::var_os("INFER_OUT").map(PathBuf::from))
                .or_else(|| config.output.clone())
                .ok_or_else(|| {
                    Error::Config(
                        "no output directory: set `output` in the config, pass --out, \
                         or export INFER_OUT"
                            .into(),
                    )
                })?;
            match repeat {
                None => {
                    let run = run_experiment(&config, &out_dir)?;
                    print_metrics(&run.dir.display().to_string(), &run.metrics);
                }
                Some(k) => {
                    let runs = run_repeats(&config, &out_dir, k)?;
                    for run in &runs {
                        print_metrics(&run.dir.display().to_string(), &run.metrics);
                    }
                    let summary = summarize_dir(&out_dir)?;
                    print_metrics(
                        &format!("median of {} runs", summary.runs),
                        &summary.medians,
                    );
                }
            }
            Ok(())
        }
        Command::Validate { config: path } => {
            let config = ExperimentConfig::from_path(&path)?;
            let prepared = prepare(&config)?;
            println!(
                "ok: {} model, {} algorithm, {} rows ({} train), {} parameters",
                prepared.config.model.kind(),
                prepared.config.algorithm.kind(),
                prepared.data.len(),
                prepared.train.len(),
                prepared.model.dim(),
            );
            Ok(())
        }
        Command::Summarize { dir } => {
            let summary = summarize_dir(&dir)?;
            let bytes = serde_json::to_vec_pretty(&summary)?;
            let path = dir.join("summary.json");
            std::fs::write(&path, &bytes)
                .map_err(|e| infer::error::io_at(&path, e))?;
            print_metrics(&format!("median of {} runs", summary.runs), &summary.medians);
            Ok(())
        }
    }
}

fn print_metrics(heading: &str, metrics: &std::collections::BTreeMap<String, f64>) {
    if metrics.is_empty() {
        println!("{heading}: done");
        return;
    }
    let line = metrics
        .iter()
        .map(|(k, v)| format!("{k} {v:.6}"))
        .collect::<Vec<_>>()
        .join("  ");
    println!("{heading}: {line}");
}
