//! `hjlab`: runs homogenization experiments described by TOML files.
//!
//! Exit codes: 0 success, 1 a verdict did not come out as expected,
//! 2 configuration or usage error, 3 numerical or i/o failure.

mod commands;
mod config;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use hjlab::par::with_workers;
use hjlab::ARTIFACT_VERSION;

use commands::{compute, render, CliError};
use config::{ExperimentConfig, Target};
use store::{config_hash, Cache};

#[derive(Parser)]
#[command(name = "hjlab", version, about = "Numerical lab for multiscale Hamilton–Jacobi homogenization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Recompute even when a cached result exists.
    #[arg(long, global = true)]
    no_cache: bool,
    /// Multiplies every sweep tolerance; overrides `tolerances.tol_scale`.
    #[arg(long, global = true, value_name = "FACTOR")]
    tol_scale: Option<f64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve the multiscale and effective Cauchy problems.
    SolveCauchy,
    /// Solve the multiscale and effective discounted static problems.
    SolveStatic,
    /// Tabulate the effective Hamiltonian and Lagrangian.
    Effective,
    /// Metric queries, lemma sweeps and the subadditivity audit.
    Metric,
    /// ε-sweeps, exponent fits and rate verdicts.
    Rates,
    /// The acceptance suite.
    VerifyAll,
}

impl Command {
    fn target(self) -> Target {
        match self {
            Command::SolveCauchy => Target::SolveCauchy,
            Command::SolveStatic => Target::SolveStatic,
            Command::Effective => Target::Effective,
            Command::Metric => Target::Metric,
            Command::Rates => Target::Rates,
            Command::VerifyAll => Target::VerifyAll,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode, CliError> {
    let start = Instant::now();
    let target = cli.command.target();
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.tol_scale {
        cfg.tolerances.tol_scale = s;
    }
    cfg.validate(target)?;

    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("hjlab-out"));
    let canonical = cfg.canonical(target);
    let hash = config_hash(&canonical);
    let exec = cfg.exec(cli.workers);
    let cache = Cache::new(&out, cfg.output.cache && !cli.no_cache);

    let t0 = Instant::now();
    let (computed, cache_use) = with_workers(cli.workers.unwrap_or(0), || {
        cache.get_or_compute(&hash, || compute(target, &cfg, exec))
    })?;
    let compute_s = t0.elapsed().as_secs_f64();

    let rendered = render(&computed, &cfg, &hash)?;
    let failures: Vec<_> = rendered.failures().into_iter().cloned().collect();
    let mut outputs = rendered.outputs;
    outputs.add("config.toml", canonical);
    let mut names = outputs.names();
    names.push("manifest.json".into());
    let verdicts: Vec<_> = rendered
        .verdicts
        .iter()
        .map(|v| serde_json::json!({ "id": v.id, "status": v.status, "expected": v.expected }))
        .collect();
    let manifest = serde_json::json!({
        "target": target.id(),
        "version": ARTIFACT_VERSION,
        "config_hash": hash,
        "cache": cache_use,
        "workers": cli.workers,
        "tolerances": cfg.tolerances,
        "verify_tolerances": (target == Target::VerifyAll).then(|| serde_json::json!({
            "lemma_oracle_tol": cfg.verify.lemma_oracle_tol,
            "cell_check_tol": cfg.verify.cell_check_tol,
            "scaling_growth": cfg.verify.scaling_growth,
        })),
        "grid": cfg.grid,
        "timings": {
            "compute_s": compute_s,
            "total_s": start.elapsed().as_secs_f64(),
        },
        "outputs": names,
        "verdicts": verdicts,
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    outputs.add("manifest.json", text);
    outputs.write_all(&out)?;

    for line in &rendered.lines {
        println!("{line}");
    }
    if target != Target::VerifyAll {
        for v in &rendered.verdicts {
            println!("{:?} {}: {}", v.status, v.id, v.diagnostics);
        }
    }
    println!("{} {}: cache {:?}, outputs in {}", target.id(), &hash[..12], cache_use, out.display());
    if failures.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    for v in &failures {
        eprintln!("FAIL {}: {:?} (expected {:?}): {}", v.id, v.status, v.expected, v.diagnostics);
    }
    Ok(ExitCode::from(1))
}
