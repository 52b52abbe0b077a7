//! `subsim`: run, validate and summarize rare-event estimator studies.
//!
//! Exit codes: 0 success, 1 invalid config or input, 2 runtime failure or
//! aborted replicates.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use subsim_core::experiment::output::summary_document;
use subsim_core::experiment::{
    cost_slopes, read_raw_csv, run_experiment, summarize_rows, write_outputs, ExperimentConfig, RunStatus,
    SummaryDocument, SummaryRow,
};
use subsim_core::Error;

#[derive(Parser)]
#[command(name = "subsim", version, about = "Multilevel subset simulation studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every estimator at every tolerance and write raw rows and summaries.
    Run {
        config: PathBuf,
        /// Worker threads for replicates.
        #[arg(long)]
        workers: Option<usize>,
        /// Global seed; overrides the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config and list every problem found.
    Validate { config: PathBuf },
    /// Aggregate a raw CSV written by `run`.
    Summarize {
        raw: PathBuf,
        /// Reference probability for the empirical c.o.v.
        #[arg(long)]
        reference: Option<f64>,
        /// Write summary.json here instead of printing it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Validation(_) | Error::Config(_) | Error::Json(_) | Error::InvalidInput(_) | Error::Csv(_) => {
                Failure::Invalid(e.into())
            }
            other => Failure::Runtime(other.into()),
        }
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::Invalid)?;
    Ok(ExperimentConfig::from_json(&text)?)
}

fn print_table(rows: &[SummaryRow]) {
    println!(
        "{:<13} {:>7} {:>5} {:>5} {:>12} {:>9} {:>9} {:>9} {:>12}",
        "estimator", "tol", "done", "abort", "mean p", "spread", "delta", "delta^", "mean cost"
    );
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    for r in rows {
        println!(
            "{:<13} {:>7} {:>5} {:>5} {:>12.4e} {:>9.4} {:>9} {:>9.4} {:>12.4e}",
            r.estimator,
            r.tol,
            r.completed,
            r.aborted,
            r.mean_p_hat,
            r.spread_cov,
            opt(r.empirical_cov),
            r.mean_cov_hat,
            r.mean_cost
        );
    }
}

fn run(config: &Path, workers: Option<usize>, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), Failure> {
    let mut cfg = load(config)?;
    if workers.is_some() {
        cfg.workers = workers;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(dir) = out {
        cfg.output.dir = dir;
    }
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(Error::Validation(errs).into());
    }
    eprintln!(
        "running {} on {} with {} replicates, {} worker(s)",
        cfg.estimators.iter().map(|e| e.name()).collect::<Vec<_>>().join(", "),
        cfg.benchmark.name(),
        cfg.replicates,
        cfg.workers()
    );
    let results = run_experiment(&cfg)?;
    write_outputs(&cfg, &results)?;
    print_table(&results.summary);
    for (est, slope) in &summary_document(&cfg, &results).cost_slopes {
        println!("cost-vs-TOL slope {est}: {slope:.3}");
    }
    println!("wrote {}", cfg.output.dir.display());
    let aborted: Vec<_> = results
        .records
        .iter()
        .filter_map(|r| match &r.status {
            RunStatus::Aborted(m) => Some(format!("{} tol {} replicate {}: {m}", r.estimator_label(), r.tol, r.replicate)),
            _ => None,
        })
        .collect();
    if aborted.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(anyhow::anyhow!("{} replicate(s) aborted:\n  {}", aborted.len(), aborted.join("\n  "))))
    }
}

fn summarize(raw: &Path, reference: Option<f64>, out: Option<PathBuf>) -> Result<(), Failure> {
    if let Some(p) = reference {
        if !(p > 0.0 && p < 1.0) {
            return Err(Failure::Invalid(anyhow::anyhow!("reference {p} outside (0,1)")));
        }
    }
    let rows = read_raw_csv(raw)?;
    let Some(first) = rows.first() else {
        return Err(Failure::Invalid(anyhow::anyhow!("{} has no data rows", raw.display())));
    };
    let summary = summarize_rows(&rows, reference);
    let doc = SummaryDocument {
        benchmark: first.benchmark.clone(),
        seed: first.seed,
        replicates: rows.iter().map(|r| r.replicate + 1).max().unwrap_or(0),
        reference_probability: reference,
        cost_slopes: cost_slopes(&summary),
        rows: summary,
    };
    let json = serde_json::to_string_pretty(&doc).map_err(|e| Failure::Runtime(e.into()))?;
    match out {
        Some(dir) => {
            std::fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(e.into()))?;
            let path = dir.join("summary.json");
            std::fs::write(&path, json).map_err(|e| Failure::Runtime(e.into()))?;
            print_table(&doc.rows);
            println!("wrote {}", path.display());
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, workers, seed, out } => run(&config, workers, seed, out),
        Command::Validate { config } => load(&config).map(|cfg| {
            println!(
                "{}: ok ({} on {}, {} tolerance(s), {} replicates)",
                config.display(),
                cfg.estimators.iter().map(|e| e.name()).collect::<Vec<_>>().join(", "),
                cfg.benchmark.name(),
                cfg.tolerances.len(),
                cfg.replicates
            );
        }),
        Command::Summarize { raw, reference, out } => summarize(&raw, reference, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

