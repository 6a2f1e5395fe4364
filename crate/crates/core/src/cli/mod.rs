//! Command-line surface: `simulate`, `verify`, `convergence` and `gamma-bench`.
//!
//! All artifacts are CSV files written to `[output] directory`, together with
//! a `manifest.csv` that records the configuration hash, seed, crate version
//! and the SHA-256 of every artifact. Exit codes: `0` success, `1` a check
//! failed (or, with `--strict`, a convergence study was flagged), `2` error.

mod commands;
pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use commands::{convergence, gamma_bench, simulate, verify, ConvergenceReport, VerifyRow};
pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "delay-spde",
    version,
    about = "Mild solutions of stochastic equations with infinite delay"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// TOML run configuration (defaults apply when omitted).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `[stochastics] seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `[stochastics] paths`.
    #[arg(long)]
    pub paths: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Picard solve; writes paths.csv, convergence.csv and manifest.csv.
    Simulate(CommonArgs),
    /// Invariant suite; writes verify.csv, exit 1 if any row fails.
    Verify(CommonArgs),
    /// Strong self-convergence under coupled time-step refinement.
    Convergence {
        #[command(flatten)]
        common: CommonArgs,
        /// Overrides `[convergence] levels`.
        #[arg(long)]
        levels: Option<usize>,
        /// Exit 1 when the error sequence is flagged as non-monotone.
        #[arg(long)]
        strict: bool,
    },
    /// Monte Carlo γ-norms against Hilbert–Schmidt norms.
    GammaBench(CommonArgs),
}

impl CommonArgs {
    pub fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.stochastics.seed = seed;
        }
        if let Some(paths) = self.paths {
            cfg.stochastics.paths = paths;
        }
        cfg.check()?;
        Ok(cfg)
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Divergence { residuals, .. } = &e {
                eprintln!("residuals by iteration:");
                for (k, r) in residuals.iter().enumerate() {
                    eprintln!("  {k:>3}  {r:e}");
                }
            }
            2
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Simulate(args) => {
            let cfg = args.load()?;
            let artifacts = simulate(&cfg)?;
            artifacts.write(&cfg)?;
            Ok(0)
        }
        Command::Verify(args) => {
            let cfg = args.load()?;
            let (rows, artifacts) = verify(&cfg)?;
            print!("{}", artifacts.get("verify.csv").unwrap_or_default());
            artifacts.write(&cfg)?;
            Ok(if rows.iter().all(|r| r.pass) { 0 } else { 1 })
        }
        Command::Convergence {
            common,
            levels,
            strict,
        } => {
            let mut cfg = common.load()?;
            if let Some(levels) = levels {
                cfg.convergence.levels = levels;
                cfg.check()?;
            }
            let (report, artifacts) = convergence(&cfg)?;
            print!(
                "{}",
                artifacts.get("convergence_order.csv").unwrap_or_default()
            );
            artifacts.write(&cfg)?;
            if report.flagged {
                eprintln!("warning: errors are not monotone beyond Monte Carlo noise");
            }
            Ok(if strict && report.flagged { 1 } else { 0 })
        }
        Command::GammaBench(args) => {
            let cfg = args.load()?;
            let artifacts = gamma_bench(&cfg)?;
            print!("{}", artifacts.get("gamma_bench.csv").unwrap_or_default());
            artifacts.write(&cfg)?;
            Ok(0)
        }
    }
}

/// CSV artifacts of one command, kept in memory until the run succeeds.
#[derive(Debug, Default, Clone)]
pub struct Artifacts {
    files: Vec<(String, String)>,
}

impl Artifacts {
    pub fn push(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_str())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// The manifest: one `key,value` row per fact, artifacts last.
    pub fn manifest(&self, cfg: &RunConfig) -> Result<String> {
        let mut out = String::from("key,value\n");
        let _ = writeln!(out, "config_sha256,{}", cfg.hash()?);
        let _ = writeln!(out, "seed,{}", cfg.stochastics.seed);
        let _ = writeln!(out, "paths,{}", cfg.stochastics.paths);
        let _ = writeln!(out, "crate_version,{}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "csv_schema,1");
        for (name, contents) in &self.files {
            let _ = writeln!(out, "artifact:{name},{}", sha256_hex(contents.as_bytes()));
        }
        Ok(out)
    }

    /// Writes every artifact and the manifest into `[output] directory`.
    pub fn write(&self, cfg: &RunConfig) -> Result<()> {
        self.write_to(&cfg.output.directory, cfg)
    }

    pub fn write_to(&self, dir: &Path, cfg: &RunConfig) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, contents) in &self.files {
            std::fs::write(dir.join(name), contents)?;
        }
        std::fs::write(dir.join("manifest.csv"), self.manifest(cfg)?)?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
