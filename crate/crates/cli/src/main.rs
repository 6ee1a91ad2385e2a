use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use bursthads_cli::pipeline::print_summary;
use bursthads_cli::{run_experiment, write_artifacts, ExperimentConfig, Strategy};
use clap::{ArgAction, Parser};

/// Runs a batch of scheduling experiments described by a TOML file.
#[derive(Debug, Parser)]
#[command(name = "bursthads", version)]
struct Args {
    /// Experiment configuration file.
    config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(short, long)]
    seed: Option<u64>,
    /// Runs only these strategies (repeatable).
    #[arg(long = "strategy", value_name = "NAME")]
    strategies: Vec<Strategy>,
    /// Writes one JSONL event trace per run.
    #[arg(long, overrides_with = "no_trace")]
    trace: bool,
    #[arg(long, overrides_with = "trace")]
    no_trace: bool,
    /// More progress output on stderr (repeatable).
    #[arg(short, long, action = ArgAction::Count)]
    verbose: u8,
    /// Suppresses the summary table.
    #[arg(short, long)]
    quiet: bool,
}

fn run(args: Args) -> Result<bool> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(dir) = args.output_dir {
        cfg.output_dir = dir;
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if !args.strategies.is_empty() {
        cfg.strategies.retain(|s| args.strategies.contains(s));
        anyhow::ensure!(!cfg.strategies.is_empty(), "strategy filter matches no configured strategy");
    }
    if args.trace {
        cfg.trace = true;
    } else if args.no_trace {
        cfg.trace = false;
    }
    if args.verbose > 0 {
        eprintln!(
            "{} tasks, {} scenarios, {} replications, strategies: {}",
            cfg.job.tasks.len(),
            cfg.scenarios.len(),
            cfg.replications,
            cfg.strategies.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ")
        );
    }
    let started = Instant::now();
    let result = run_experiment(&cfg)?;
    write_artifacts(&result, &cfg.output_dir, cfg.trace)?;
    if args.verbose > 0 {
        eprintln!(
            "{} runs in {:.1}s, artifacts in {}",
            result.runs.len(),
            started.elapsed().as_secs_f64(),
            cfg.output_dir.display()
        );
    }
    if args.verbose > 1 {
        for r in &result.runs {
            if let Some(rep) = r.report() {
                eprintln!(
                    "{}: cost {:.4} makespan {} deadline_met {}",
                    r.file_stem(),
                    rep.total_cost,
                    rep.makespan,
                    rep.deadline_met
                );
            }
        }
    }
    if !args.quiet {
        print_summary(&result, &mut std::io::stdout())?;
    }
    let clean = result.integrity_failures().next().is_none();
    Ok(clean)
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
