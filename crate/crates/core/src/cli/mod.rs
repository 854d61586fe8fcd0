//! Batch experiment runner.
//!
//! `viscolab run <config.toml> [--outdir DIR] [--seed N]` executes the
//! configured scenario and writes `report.json` plus CSV curves. Exit codes:
//! 0 when every check passes, 2 when a check fails, 1 on errors.

pub mod config;
pub mod report;
pub mod scenarios;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{LabError, Result};
use config::{Config, SCENARIOS};
use report::{OutputDir, RunReport, SCHEMA_VERSION};
use scenarios::{run_scenario, Context, RUNNABLE};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAIL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "viscolab", version, about = "Viscosity-solution laboratory: scenario runner")]
pub struct Cli {
    /// Print the scenario names and exit.
    #[arg(long)]
    pub list: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the scenario named in a TOML config.
    Run {
        config: PathBuf,
        /// Output directory (overrides `outdir` in the config).
        #[arg(long)]
        outdir: Option<PathBuf>,
        /// Seed (overrides `seed` in the config).
        #[arg(long)]
        seed: Option<u64>,
    },
}

pub fn list_scenarios() -> &'static [&'static str] {
    &SCENARIOS
}

/// Runs a parsed config; returns the report and the directory it went to.
pub fn run_config(cfg: &Config, outdir: &Path) -> Result<RunReport> {
    let out = OutputDir::create(outdir)?;
    let names: Vec<&str> = if cfg.scenario == "all" {
        RUNNABLE.to_vec()
    } else {
        vec![cfg.scenario.as_str()]
    };
    let mut reports = Vec::new();
    for op_cfg in cfg.operators() {
        for name in &names {
            let ctx = Context {
                cfg,
                scenario: name,
                op_cfg,
                out: &out,
            };
            reports.push(run_scenario(&ctx)?);
        }
    }
    let run = RunReport {
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        scenario: cfg.scenario.clone(),
        pass: reports.iter().all(|r| r.pass),
        reports,
    };
    out.write_run(&run)?;
    Ok(run)
}

fn run_command(config: &Path, outdir: Option<PathBuf>, seed: Option<u64>) -> Result<RunReport> {
    let mut cfg = Config::from_path(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let outdir = outdir
        .or_else(|| cfg.outdir.clone())
        .unwrap_or_else(|| PathBuf::from("viscolab-out"));
    run_config(&cfg, &outdir)
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_PASS };
        }
    };
    if cli.list {
        for name in list_scenarios() {
            println!("{name}");
        }
        return EXIT_PASS;
    }
    match cli.command {
        None => {
            eprintln!("nothing to do: pass `run <config>` or `--list`");
            EXIT_ERROR
        }
        Some(Command::Run { config, outdir, seed }) => match run_command(&config, outdir, seed) {
            Ok(run) => {
                for r in &run.reports {
                    for c in &r.checks {
                        let tag = if c.pass { "PASS" } else { "FAIL" };
                        println!("{tag} {}/{} {}: {}", r.operator, r.scenario, c.name, c.detail);
                    }
                }
                if run.pass {
                    EXIT_PASS
                } else {
                    EXIT_FAIL
                }
            }
            Err(e) => {
                report_error(&e);
                EXIT_ERROR
            }
        },
    }
}

fn report_error(e: &LabError) {
    eprintln!("error: {e}");
}
