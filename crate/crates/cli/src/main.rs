//! `sqvdc`: command-line access to every stage of the construction.
//!
//! Each command prints one JSON document or one CSV table. Verifications
//! are collected into a list of named checks; the exit code is 0 when all
//! of them pass, 1 when one fails and 2 on errors.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::{Format, RunConfig, CONFIG_ENV};

#[derive(Parser, Debug)]
#[command(name = "sqvdc", version, about = "Nonnegative cosine polynomials with square frequencies")]
struct Cli {
    /// JSON run configuration; keys: precision, grid, c1, format, max_terms, max_subset_n, seed.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Working precision in bits (at least 53).
    #[arg(long, global = true)]
    precision: Option<u32>,
    /// Error-envelope constant c1.
    #[arg(long, global = true)]
    c1: Option<f64>,
    /// Seed for every randomized sweep.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on materialized coefficients.
    #[arg(long, global = true)]
    max_terms: Option<u64>,
    /// Largest n searched exhaustively by `modular`.
    #[arg(long, global = true)]
    max_subset_n: Option<u64>,
    /// Write to this file instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Weight scheme for δ.
    ///
    /// CSV columns: j, level, weight.
    Scheme(commands::SchemeArgs),
    /// Leading terms τ_L(q) and ϑ_L(q).
    ///
    /// CSV columns: q, tau, vartheta, case, r.
    Tau(commands::TauArgs),
    /// Complete Gauss sums against the closed form ϑ_L(q).
    ///
    /// CSV columns: q, L, vartheta, case, numerators, max_error.
    Gauss(commands::GaussArgs),
    /// Build the polynomial for δ and optionally check min T >= -δ on a grid.
    ///
    /// CSV columns: i, x, value (one row per grid point with --verify).
    Build(commands::BuildArgs),
    /// Extremal LP values γ(n) or γ⁺(n), or comparison with a saved build.
    ///
    /// CSV columns: n, mode, a0, status, duality_gap, max_violation, iterations, rounds.
    /// With --from-file: support_size, shift, construction_a0, lp_a0, lp_status, consistent.
    Oracle(commands::OracleArgs),
    /// Squares mod n, square-difference-free sets and the density check.
    ///
    /// CSV columns: n, squares, max_size, exact, delta, rho, holds.
    Modular(commands::ModularArgs),
    /// Per-k approximation and error schedule at x.
    ///
    /// CSV columns: k, M_k, p, q, eps, envelope.
    Schedule(commands::ScheduleArgs),
}

impl Cli {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.format {
            cfg.format = v;
        }
        if let Some(v) = self.precision {
            cfg.precision = v;
        }
        if let Some(v) = self.c1 {
            cfg.c1 = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.max_terms {
            cfg.max_terms = v;
        }
        if let Some(v) = self.max_subset_n {
            cfg.max_subset_n = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = cli.run_config()?;
    let out = match &cli.command {
        Command::Scheme(a) => commands::scheme(a, &cfg)?,
        Command::Tau(a) => commands::tau(a)?,
        Command::Gauss(a) => commands::gauss(a, &cfg)?,
        Command::Build(a) => commands::build(a, &cfg)?,
        Command::Oracle(a) => commands::oracle(a, &cfg)?,
        Command::Modular(a) => commands::modular(a, &cfg)?,
        Command::Schedule(a) => commands::schedule(a, &cfg)?,
    };
    let text = out.render(cfg.format)?;
    match &cli.output {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    for c in &out.checks {
        eprintln!("[{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(out.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
