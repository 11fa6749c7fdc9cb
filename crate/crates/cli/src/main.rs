use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use dbsde_core::experiment::{load_config, run, validate, ExperimentConfig, Mode, Overrides};
use dbsde_core::registry::Registry;

/// Delayed BSDE solver and stability experiments.
///
/// Every flag can also be set through an environment variable with the
/// `DBSDE_` prefix, e.g. `DBSDE_SEED=7` or `DBSDE_THREADS=4`.
#[derive(Debug, Parser)]
#[command(name = "dbsde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Debug, Args)]
struct Global {
    /// Experiment config (JSON).
    #[arg(long, global = true, env = "DBSDE_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory; defaults to `out` in the config, then `./out`.
    #[arg(long, global = true, env = "DBSDE_OUT")]
    out: Option<PathBuf>,
    #[arg(long, global = true, env = "DBSDE_SEED")]
    seed: Option<u64>,
    /// Number of Monte Carlo paths.
    #[arg(long, global = true, env = "DBSDE_PATHS")]
    paths: Option<usize>,
    /// Number of uniform time steps.
    #[arg(long, global = true, env = "DBSDE_STEPS")]
    steps: Option<usize>,
    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true, env = "DBSDE_THREADS")]
    threads: Option<usize>,
    /// Picard stopping tolerance.
    #[arg(long, global = true, env = "DBSDE_TOL")]
    tol: Option<f64>,
    #[arg(long = "max-iter", global = true, env = "DBSDE_MAX_ITER")]
    max_iter: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate every assumption and print a pass/fail table.
    CheckAssumptions,
    /// Solve one delayed BSDE by Picard iteration.
    Solve,
    /// Run a perturbation-family stability campaign.
    Stability,
    /// Run a stochastic Helly-Bray experiment.
    HellyBray,
    /// Check a config without running it.
    Validate,
}

fn load(g: &Global) -> anyhow::Result<ExperimentConfig> {
    let Some(path) = &g.config else {
        bail!("--config is required");
    };
    let mut cfg = load_config(path).with_context(|| format!("loading {}", path.display()))?;
    cfg.apply(&Overrides {
        seed: g.seed,
        n_paths: g.paths,
        n_steps: g.steps,
        tol: g.tol,
        max_iter: g.max_iter,
        out: g.out.clone(),
    });
    Ok(cfg)
}

fn execute(cli: Cli) -> anyhow::Result<u8> {
    let mut cfg = load(&cli.global)?;
    let registry = Registry::default();
    let mode = match cli.command {
        Command::CheckAssumptions => Mode::CheckAssumptions,
        Command::Solve => Mode::Solve,
        Command::Stability => Mode::Stability,
        Command::HellyBray => Mode::HellyBray,
        Command::Validate => {
            let diags = validate(&cfg, &registry);
            for d in &diags {
                println!("{d}");
            }
            if diags.is_empty() {
                println!("config ok");
                return Ok(0);
            }
            return Ok(1);
        }
    };
    if cfg.mode != mode {
        log::info!("config mode {:?} replaced by subcommand {:?}", cfg.mode, mode);
        cfg.mode = mode;
    }
    let diags = validate(&cfg, &registry);
    if !diags.is_empty() {
        for d in &diags {
            eprintln!("invalid config: {d}");
        }
        return Ok(1);
    }
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.threads.unwrap_or(0))
        .build()
        .context("building thread pool")?;
    let outcome = pool.install(|| run(&cfg, &registry, &out))?;
    for line in &outcome.summary {
        println!("{line}");
    }
    println!("wrote {} files to {}", outcome.artifacts.len(), out.display());
    Ok(outcome.status.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("DBSDE_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
