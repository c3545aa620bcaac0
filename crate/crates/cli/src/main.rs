use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use eci_core::datagen::{generate, SyntheticSpec};
use eci_core::ingest::write_series_csv;
use eci_core::par::{self, Execution};
use eci_core::suite::{run_suite, write_outputs, ExperimentSuite};
use eci_core::verify::{run_battery, VerifyBattery};

#[derive(Parser)]
#[command(name = "eci", version, about = "Online conformal prediction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment suite and write traces and summaries.
    Run(RunArgs),
    /// Run the guarantee checks; exits nonzero on any violation.
    Verify(VerifyArgs),
    /// Write a synthetic changepoint series as CSV.
    Gen(GenArgs),
}

#[derive(Args)]
struct Common {
    /// Worker threads for independent runs (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Replace every seed in the config with this one.
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: `out_dir` from the config, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct VerifyArgs {
    /// Battery definition; the standard battery is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for `verify.toml`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct GenArgs {
    /// Synthetic spec; the two-changepoint default is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Destination CSV file.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

fn execution(workers: Option<usize>) -> Execution {
    match workers {
        Some(1) => Execution::Sequential,
        _ => Execution::Parallel,
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let mut suite = ExperimentSuite::load(&args.config)?;
    if let Some(seed) = args.common.seed_override {
        suite.seeds = vec![seed];
    }
    let out = args
        .out
        .or_else(|| suite.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let traces = out.join("traces");
    let exec = execution(args.common.workers);
    let outcome = par::with_workers(args.common.workers, || run_suite(&suite, Some(&traces), exec))?;
    let written = write_outputs(&outcome, &out)?;
    log::info!("{} runs, wrote {}", outcome.runs.len(), written.len() + outcome.runs.len());
    for r in &outcome.runs {
        println!(
            "{:<20} {:<16} eta={:<8} seed={:<4} coverage={:.2}% avg_width={:.4} median_width={:.4}",
            r.method, r.dataset, r.eta, r.seed, r.coverage_pct, r.avg_width, r.median_width
        );
    }
    if !outcome.failures.is_empty() {
        for f in &outcome.failures {
            eprintln!("run {} failed: {}", f.run, f.error);
        }
        bail!("{} of {} runs failed", outcome.failures.len(), outcome.failures.len() + outcome.runs.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode> {
    let mut battery = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<VerifyBattery>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => VerifyBattery::standard(),
    };
    if let Some(seed) = args.common.seed_override {
        for seeds in [
            battery.theorem1.as_mut().map(|b| &mut b.seeds),
            battery.bounds.as_mut().map(|b| &mut b.seeds),
            battery.theorem2.as_mut().map(|b| &mut b.seeds),
        ]
        .into_iter()
        .flatten()
        {
            *seeds = vec![seed];
        }
    }
    let exec = execution(args.common.workers);
    let report = par::with_workers(args.common.workers, || run_battery(&battery, exec))?;
    if let Some(dir) = &args.out {
        write_report(dir, &report)?;
    }
    for o in &report.outcomes {
        let status = if o.violations == 0 { "ok" } else { "VIOLATED" };
        println!("{:<13} seed={:<4} violations={:<4} {status} {}", o.check, o.seed, o.violations, o.detail);
    }
    let total = report.total_violations();
    if total > 0 {
        eprintln!("{total} violations");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn write_report(dir: &Path, report: &eci_core::verify::BatteryReport) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("verify.toml");
    std::fs::write(&path, toml::to_string(report)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<ExitCode> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<SyntheticSpec>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => SyntheticSpec::changepoint_default(0),
    };
    if let Some(seed) = args.common.seed_override {
        spec.seed = seed;
    }
    let series = generate(&spec)?;
    let timestamps: Vec<String> = (0..series.y.len()).map(|t| t.to_string()).collect();
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    write_series_csv(&args.out, &timestamps, &series.y)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Gen(a) => cmd_gen(a),
    }
}
