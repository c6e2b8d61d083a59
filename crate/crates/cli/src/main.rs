mod commands;
mod config;
mod output;
mod suite;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, ValueEnum};

use config::{ConfigError, RunConfig};
use output::Manifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    /// Circular orbit with its boundary data
    Circular,
    /// Action breakdown
    Action,
    /// Per-node equation-of-motion residual
    Residual,
    /// Sewing chains
    Grid,
    /// Second-variation spectrum
    Hessian,
    /// Smallest eigenvalue along a list of radii
    Scan,
    /// Boundary-value solve by action minimization
    Solve,
    /// Momentum and angular momentum table
    Invariants,
    /// Acceptance criteria
    Accept,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Circular => "circular",
            Command::Action => "action",
            Command::Residual => "residual",
            Command::Grid => "grid",
            Command::Hessian => "hessian",
            Command::Scan => "scan",
            Command::Solve => "solve",
            Command::Invariants => "invariants",
            Command::Accept => "accept",
        }
    }
}

/// Finite-bounds two-body action toolkit.
///
/// Settings come from an optional key=value file (`--config FILE`) and
/// `--key value` overrides, e.g. `wfvar circular --r12 100 --arc 6.2832`.
#[derive(Debug, Parser)]
#[command(name = "wfvar", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// key=value settings file
    #[arg(long)]
    config: Option<PathBuf>,
    /// `--key value` overrides of any setting
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use wfvar::Error as E;
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<E>() {
        Some(E::NoConvergence { .. } | E::SolverNoConvergence(_)) => 3,
        Some(E::NearLuminalJacobian { .. } | E::SuperluminalOrbit { .. } | E::LuminalVelocity { .. } | E::SuperluminalStep { .. }) => 4,
        Some(E::InvalidEhbc(_) | E::ArcTooShort { .. }) => 5,
        Some(E::InvalidInput(_)) => 2,
        _ => 1,
    }
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir)?;
    let name = cli.command.name();
    let mut m = Manifest::new(name, &cfg);
    let t0 = Instant::now();
    let result = match cli.command {
        Command::Circular => commands::circular(&cfg, &dir, &mut m).map(|_| true),
        Command::Action => commands::action(&cfg, &dir, &mut m).map(|_| true),
        Command::Residual => commands::residual(&cfg, &dir, &mut m).map(|_| true),
        Command::Grid => commands::grid(&cfg, &dir, &mut m).map(|_| true),
        Command::Hessian => commands::hessian(&cfg, &dir, &mut m).map(|_| true),
        Command::Scan => commands::scan(&cfg, &dir, &mut m).map(|_| true),
        Command::Solve => commands::solve_cmd(&cfg, &dir, &mut m).map(|_| true),
        Command::Invariants => commands::invariants(&cfg, &dir, &mut m).map(|_| true),
        Command::Accept => suite::accept(&cfg.list_usize("criteria")?, cfg.u64("seed")?, &dir, &mut m),
    };
    m.add("status", match &result {
        Ok(true) => "ok".to_string(),
        Ok(false) => "criteria failed".to_string(),
        Err(e) => format!("error: {e}"),
    });
    m.write(&dir, name, t0.elapsed())?;
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("WFVAR_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        // only fails when a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("wfvar {}: {e:#}", cli.command.name());
            ExitCode::from(exit_code(&e))
        }
    }
}
