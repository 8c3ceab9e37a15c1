//! Command-line front end: TOML configuration, artifacts and the five
//! subcommands.

pub mod artifacts;
pub mod commands;
pub mod config;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;
pub const EXIT_STAGNATION: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "wildmhd", version, about = "Wild entropy-conserving solutions of 2D ideal MHD")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "wildmhd.toml")]
    pub config: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Uniform residual tolerance, overriding the config.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run convex integration and write the artifacts.
    Build,
    /// Check the weak identities, building first if needed.
    Verify,
    /// Compare the reduced 2D residuals with the lifted 3D ones.
    ReduceCheck,
    /// Check the isentropic identities and the energy closure.
    Isentropic,
    /// Build several seeds and report their pairwise L2 distances.
    Compare {
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }

    pub fn verification(message: impl Into<String>) -> Self {
        Self { code: EXIT_VERIFY, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

/// Exit code for an error raised anywhere below [`run`].
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use wildmhd::Error as E;
    if let Some(e) = err.downcast_ref::<CliError>() {
        return e.code;
    }
    if err.downcast_ref::<config::ConfigError>().is_some() {
        return EXIT_CONFIG;
    }
    match err.downcast_ref::<E>() {
        Some(E::Stagnation { .. }) => EXIT_STAGNATION,
        Some(E::NonSmooth(_)) => EXIT_VERIFY,
        Some(
            E::Domain(_)
            | E::InadmissibleLambda { .. }
            | E::InvalidData(_)
            | E::UnknownIdentity(_)
            | E::PressureLawMismatch { .. }
            | E::GridMismatch(_),
        ) => EXIT_CONFIG,
        _ => EXIT_IO,
    }
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let mut cfg = config::load(&cli.config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.out {
        cfg.out_dir = d.clone();
    }
    if let Some(t) = cli.tol {
        if !(t >= 0.0) {
            return Err(CliError::usage(format!("--tol must be non-negative, got {t}")).into());
        }
        cfg.tolerances = wildmhd::verify::Tolerances::uniform(t);
    }
    let dir = cfg.out_dir.clone();
    match &cli.command {
        Command::Build => commands::build(&cfg, cfg.seed, &dir, cli.quiet).map(drop),
        Command::Verify => commands::run_verify(&cfg, &dir, cli.quiet).map(drop),
        Command::ReduceCheck => {
            commands::run_reduce_check(&cfg, &dir, cli.tol.unwrap_or(commands::REDUCTION_TOL), cli.quiet).map(drop)
        }
        Command::Isentropic => commands::run_isentropic(&cfg, &dir, cli.quiet).map(drop),
        Command::Compare { seeds } => {
            let seeds = seeds.clone().unwrap_or_else(|| cfg.compare_seeds.clone());
            commands::run_compare(&cfg, &seeds, &dir, cli.quiet).map(drop)
        }
    }
}
