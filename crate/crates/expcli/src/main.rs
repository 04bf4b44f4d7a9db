//! Command-line driver for the experiment library: runs a config file,
//! validates one statically, or lists the available models and
//! experiment kinds.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

mod config;
mod experiments;
mod report;

use config::ExperimentConfig;
use report::ExperimentReport;

/// Environment variable naming the default output directory.
const OUT_DIR_VAR: &str = "EXPCLI_OUT_DIR";

#[derive(Parser)]
#[command(name = "expcli", version, about = "Potential-theory experiment runner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the worker count in the config (0 = machine default).
        #[arg(long)]
        workers: Option<usize>,
        /// Output path stem; `.json` and `.csv` are appended.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Static checks only; prints one diagnostic per line.
    Validate { config: PathBuf },
    /// Prints the model and subordinator id grammar with examples.
    ListModels,
    /// Prints the experiment kinds and the fields each one reads.
    ListExperiments,
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch() -> Result<ExitCode> {
    match Cli::parse().cmd {
        Cmd::Run { config, seed, workers, out } => run(&config, seed, workers, out),
        Cmd::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let diags = cfg.validate();
            for d in &diags {
                println!("{d}");
            }
            Ok(if diags.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Cmd::ListModels => {
            print!("{}", MODELS_HELP);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::ListExperiments => {
            print!("{}", EXPERIMENTS_HELP);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn out_stem(cfg: &ExperimentConfig, config_path: &Path, cli_out: Option<PathBuf>) -> PathBuf {
    if let Some(p) = cli_out {
        return p;
    }
    let stem = config_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    let dir = cfg
        .out
        .clone()
        .or_else(|| std::env::var(OUT_DIR_VAR).ok())
        .unwrap_or_else(|| ".".into());
    Path::new(&dir).join(stem)
}

fn run(
    config_path: &Path,
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    let cfg = ExperimentConfig::load(config_path)?;
    let diags = cfg.validate();
    if !diags.is_empty() {
        for d in &diags {
            eprintln!("invalid config: {d}");
        }
        return Ok(ExitCode::from(2));
    }
    let seed = seed.unwrap_or(cfg.seed);
    let workers = workers.unwrap_or(cfg.workers);
    let stem = out_stem(&cfg, config_path, out);
    if let Some(dir) = stem.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("creating {}", dir.display()))?;
        }
    }

    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building worker pool")?;
    let outcome = pool.install(|| experiments::run(&cfg, seed));

    let mut rep = ExperimentReport {
        library_version: env!("CARGO_PKG_VERSION").into(),
        seed,
        config: cfg,
        rows: Vec::new(),
        verdicts: Vec::new(),
        z_scores: Vec::new(),
        samples_total: 0,
        error: None,
        elapsed_seconds: 0.0,
    };
    let failed = match outcome {
        Ok(o) => {
            rep.rows = o.rows;
            rep.verdicts = o.verdicts;
            rep.z_scores = o.z_scores;
            rep.samples_total = o.samples_total;
            false
        }
        Err(e) => {
            rep.error = Some(format!("{e:#}"));
            true
        }
    };
    rep.elapsed_seconds = started.elapsed().as_secs_f64();

    let json_path = stem.with_extension("json");
    rep.write_json(&json_path)?;
    rep.write_csv(&stem.with_extension("csv"))?;
    for v in &rep.verdicts {
        println!("{v}");
    }
    if let Some(e) = &rep.error {
        eprintln!("experiment failed: {e}");
    }
    println!("report: {}", json_path.display());
    Ok(if failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

const MODELS_HELP: &str = "\
process models
  stable:d=<dim>:alpha=<a>        isotropic stable, 0 < a < 2
  sbm:d=<dim>:<subordinator>      subordinate Brownian motion
  aniso:<base>:k=<name>           anisotropic modification (k: cosine2, bump)

subordinators
  gamma                           gamma subordinator
  stable:<beta>                   beta-stable, 0 < beta < 1
  geo:<lambda>                    geometric stable
  iter-geo:<m>:<lambda>           m-fold iterated geometric stable

examples
  stable:d=2:alpha=1.0
  sbm:d=3:gamma
  sbm:d=2:geo:1.0
  aniso:stable:d=2:alpha=1.5:k=cosine2
";

const EXPERIMENTS_HELP: &str = "\
levy-system           exit law vs kernel integral; needs domain, x, a_set, shell
accessibility         boundary-point dichotomy; needs domain, x (x0 optional
                      second anchor, z0 for a finite point, omit for infinity)
martin-finite         kernel ratios toward a finite boundary point; needs
                      domain, x, x0, z0, probe_dir, radii
martin-infinity       same toward infinity; needs domain, x, x0, probe_dir, radii
oscillation-finite    harmonic ratio vs jump-weighted masses; needs domain, z0,
                      separation, target1, target2, probe_dir, radii
oscillation-infinity  harmonic ratio vs plain masses; same fields
bernstein-audit       subordinator density and transform checks; model is a
                      subordinator id
kernel-audit          jump-density tail asymptotics; needs model (radii optional)
factorization-probe   boundary Harnack constant over a domain family; needs
                      domains, z0, separation, a, x_grid
";
