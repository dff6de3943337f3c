//! Command-line experiment runner: configuration, subcommands and reports.

pub mod commands;
pub mod config;
pub mod report;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use config::{ExperimentConfig, Overrides};
use serde_json::json;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "wavehom", version, about = "Long-time homogenization and eigenstate spreading experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parameter sweeps.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Space dimension (1 or 2).
    #[arg(long, global = true)]
    pub d: Option<usize>,
    /// Comma-separated κ values.
    #[arg(long, global = true, value_delimiter = ',')]
    pub kappa: Option<Vec<f64>>,
    /// Corrector order N.
    #[arg(long, global = true)]
    pub order: Option<usize>,
    /// Comma-separated θ values.
    #[arg(long, global = true, value_delimiter = ',')]
    pub theta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Correctors, growth constants and κ certificates.
    Correctors,
    /// Homogenized tensor table.
    Tensors,
    /// Decay fits of the smoothened Green function.
    GreenDecay,
    /// Two-scale error-budget sweep and secular exponents.
    TwoScale,
    /// Large-scale dispersive estimate table over (κ, R, t).
    Dispersion,
    /// Eigenstate widths and standing-wave probes.
    Spreading,
    /// Every subcommand, one subdirectory each.
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Correctors => "correctors",
            Command::Tensors => "tensors",
            Command::GreenDecay => "green-decay",
            Command::TwoScale => "two-scale",
            Command::Dispersion => "dispersion",
            Command::Spreading => "spreading",
            Command::All => "all",
        }
    }
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seed: self.seed,
            workers: self.workers,
            d: self.d,
            kappas: self.kappa.clone(),
            order: self.order,
            thetas: self.theta.clone(),
        }
    }
}

/// Run one subcommand into `dir`; returns the number of failed parameter points.
fn run_one(name: &str, cfg: &ExperimentConfig, dir: &Path) -> Result<usize> {
    let out = commands::run_named(name, cfg, dir)?;
    report::emit(dir, name, serde_json::to_value(cfg)?, &out)?;
    for f in &out.failures {
        eprintln!("{name}: {f}");
    }
    Ok(out.failures.len())
}

fn execute(cli: &Cli, cfg: &ExperimentConfig) -> Result<usize> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build().context("building worker pool")?;
    pool.install(|| match cli.command {
        Command::All => {
            let mut failed = 0;
            let mut stages = Vec::new();
            for name in commands::ALL {
                if !commands::applicable(name, cfg) {
                    stages.push(json!({ "name": name, "status": "skipped" }));
                    continue;
                }
                let status = match run_one(name, cfg, &cfg.out.join(name)) {
                    Ok(0) => "ok".to_string(),
                    Ok(n) => {
                        failed += n;
                        format!("{n} failed points")
                    }
                    Err(e) => {
                        failed += 1;
                        write_error(name, Some(&cfg.out.join(name)), &e);
                        format!("error: {e:#}")
                    }
                };
                stages.push(json!({ "name": name, "status": status }));
            }
            let mut files = Vec::new();
            for name in commands::ALL {
                let m = cfg.out.join(name).join("manifest.json");
                if m.exists() {
                    files.push(json!({ "path": format!("{name}/manifest.json"), "sha256": report::sha256_file(&m)? }));
                }
            }
            let manifest = json!({
                "schema": report::MANIFEST_SCHEMA,
                "version": env!("CARGO_PKG_VERSION"),
                "subcommand": "all",
                "config": cfg,
                "stages": stages,
                "files": files,
            });
            std::fs::write(cfg.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
            Ok(failed)
        }
        c => run_one(c.name(), cfg, &cfg.out),
    })
}

fn error_record(cli: &Cli, out: Option<&Path>, e: &anyhow::Error) {
    write_error(cli.command.name(), out, e)
}

/// Print a JSON error record to stderr and, when possible, to `out/error.json`.
fn write_error(subcommand: &str, out: Option<&Path>, e: &anyhow::Error) {
    let record = json!({
        "error": {
            "subcommand": subcommand,
            "message": e.to_string(),
            "chain": e.chain().map(|c| c.to_string()).collect::<Vec<_>>(),
        }
    });
    eprintln!("{record}");
    if let Some(dir) = out {
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = std::fs::write(dir.join("error.json"), serde_json::to_string_pretty(&record).unwrap_or_default());
        }
    }
}

/// Parse, validate and run; returns the process exit status.
pub fn run(cli: Cli) -> i32 {
    let cfg = match ExperimentConfig::load(cli.config.as_deref(), &cli.overrides()) {
        Ok(c) => c,
        Err(e) => {
            error_record(&cli, cli.out.as_deref(), &e);
            return 2;
        }
    };
    match execute(&cli, &cfg) {
        Ok(0) => 0,
        Ok(_) => 1,
        Err(e) => {
            error_record(&cli, Some(&cfg.out), &e);
            1
        }
    }
}
