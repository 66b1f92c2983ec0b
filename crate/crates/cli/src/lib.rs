//! Command line driver: one TOML configuration drives a whole run.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "sobolev-profiles",
    version,
    about = "Synthesize, decompose and diagnose concentrating sequences"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the corpus manifest and field snapshots.
    Synthesize(Common),
    /// Run the full decomposition and write the report.
    Decompose(Common),
    /// Slab profiles, inner-product decay, no-concentration curves, calibration and ledgers.
    Diagnose(Common),
    /// Transition maps and limit metrics along a diverging base path.
    Atlas(Common),
    /// Geometry self-checks and report round trips.
    Verify(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `[output] dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for the library; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Synthesize(c)
            | Command::Decompose(c)
            | Command::Diagnose(c)
            | Command::Atlas(c)
            | Command::Verify(c) => c,
        }
    }
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Threads("--threads must be positive".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Threads(e.to_string()))
}

/// Runs one subcommand; returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let common = cli.command.common();
    let mut cfg = config::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    let seed = common.seed;
    let written = pool(common.threads)?.install(|| -> Result<output::Written> {
        match &cli.command {
            Command::Synthesize(_) => commands::synthesize(&cfg, seed),
            Command::Decompose(_) => commands::decompose(&cfg),
            Command::Diagnose(_) => commands::diagnose(&cfg, seed),
            Command::Atlas(_) => commands::atlas(&cfg),
            Command::Verify(_) => {
                let (w, rep) = commands::verify(&cfg, seed)?;
                for c in &rep.geometry {
                    println!(
                        "{} {} worst={:e} tol={:e}",
                        if c.passed { "PASS" } else { "FAIL" },
                        c.name,
                        c.worst,
                        c.tolerance
                    );
                }
                for (f, ok) in &rep.round_trips {
                    println!("{} round_trip {f}", if *ok { "PASS" } else { "FAIL" });
                }
                if !rep.passed {
                    return Err(CliError::Verify("see verify.json".into()));
                }
                Ok(w)
            }
        }
    })?;
    Ok(written.files)
}
