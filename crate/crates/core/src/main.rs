use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

use mismatch_splitting::experiments::analyze::{run_analyze, run_stepsize, AnalyzeConfig, StepsizeConfig};
use mismatch_splitting::experiments::{
    emit_report, run_counterexample, run_quadratic, run_tomography, CounterexampleConfig, QuadraticConfig, RunReport,
    TomoConfig,
};
use mismatch_splitting::Result;

#[derive(Parser)]
#[command(
    name = "mismatch-splitting",
    version,
    about = "PDDR with mismatched adjoints: experiments and analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON configuration file (defaults are used for omitted fields).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for traces, summaries and images.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Tomography only: 400 x 400 pixels, 40 angles, 400 bins.
    #[arg(long)]
    full_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Random quadratic study with four solvers.
    Quadratic(Common),
    /// Divergence counterexample (exit code 2 on certified divergence).
    Counterexample(Common),
    /// TV tomography with a ray-driven / pixel-driven projector pair.
    Tomo(Common),
    /// Step-size plan for operators given in the config.
    Stepsize(Common),
    /// Fixed-point report for a candidate point.
    Analyze(Common),
}

fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_str(&fs::read_to_string(p)?)?),
        None => Ok(T::default()),
    }
}

fn load_required<T: DeserializeOwned>(path: Option<&Path>, what: &str) -> Result<(T, PathBuf)> {
    let p = path.ok_or_else(|| mismatch_splitting::Error::InvalidConfig(format!("{what} needs --config")))?;
    let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((serde_json::from_str(&fs::read_to_string(p)?)?, base))
}

fn finish(report: &RunReport, out: &Path) -> Result<ExitCode> {
    let paths = emit_report(report, out)?;
    println!("{}: {:?}", report.experiment, report.terminal_status);
    for (k, v) in &report.metrics {
        println!("  {k} = {v:.6e}");
    }
    for (k, v) in &report.flags {
        println!("  {k} = {v}");
    }
    for p in paths {
        println!("  wrote {}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Quadratic(c) => {
            let mut cfg: QuadraticConfig = load(c.config.as_deref())?;
            cfg.seed = c.seed.unwrap_or(cfg.seed);
            finish(&run_quadratic(&cfg)?, &c.out)
        }
        Command::Counterexample(c) => {
            let mut cfg: CounterexampleConfig = load(c.config.as_deref())?;
            cfg.seed = c.seed.unwrap_or(cfg.seed);
            let report = run_counterexample(&cfg)?;
            finish(&report, &c.out)?;
            Ok(if report.certified_divergence() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Tomo(c) => {
            let mut cfg: TomoConfig = load(c.config.as_deref())?;
            cfg.seed = c.seed.unwrap_or(cfg.seed);
            if c.full_scale {
                cfg = cfg.full_scale();
            }
            finish(&run_tomography(&cfg)?, &c.out)
        }
        Command::Stepsize(c) => {
            let (cfg, base): (StepsizeConfig, _) = load_required(c.config.as_deref(), "stepsize")?;
            let plan = run_stepsize(&cfg, &base)?;
            let json = serde_json::to_string_pretty(&plan)?;
            fs::create_dir_all(&c.out)?;
            fs::write(c.out.join("stepsize_plan.json"), &json)?;
            println!("{json}");
            print!("{}", plan.table());
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze(c) => {
            let (cfg, base): (AnalyzeConfig, _) = load_required(c.config.as_deref(), "analyze")?;
            let report = run_analyze(&cfg, &base)?;
            let json = serde_json::to_string_pretty(&report)?;
            fs::create_dir_all(&c.out)?;
            fs::write(c.out.join("analyze_report.json"), &json)?;
            println!("{json}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
