//! `flatmap` command-line front end.
//!
//! Exit codes: 0 ok, 2 config error, 3 eigensolver failure, 4 solver
//! failure, 5 I/O error.

mod artifacts;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use flatmap::config::parse_config;
use flatmap::FlatError;

use artifacts::{sha256_hex, Artifacts};
use commands::Run;

#[derive(Parser)]
#[command(
    name = "flatmap",
    version,
    about = "Fiber-wise solver for -Δu - f(x,u) = g on [0,1]x[0,2]"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Print nothing but errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Export mesh, DOF map, stiffness and mass matrices.
    Mesh,
    /// Discrete eigenvalues against the analytic ones.
    Eigs,
    /// Horizontal Newton from the initial point onto the fiber of g.
    FiberPoint,
    /// Sample the image of a fiber (1-D window, or 2-D circle and rays).
    TraceFiber,
    /// Find the solutions of F(u) = g lying on a fiber.
    Solve,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Mesh => "mesh",
            Command::Eigs => "eigs",
            Command::FiberPoint => "fiber-point",
            Command::TraceFiber => "trace-fiber",
            Command::Solve => "solve",
        }
    }
}

const EXIT_CONFIG: u8 = 2;
const EXIT_EIGS: u8 = 3;
const EXIT_SOLVER: u8 = 4;
const EXIT_IO: u8 = 5;

fn exit_code(e: &FlatError) -> u8 {
    match e {
        FlatError::Config(_) | FlatError::Expression { .. } | FlatError::Argument(_) => EXIT_CONFIG,
        FlatError::EigenNonConvergence { .. }
        | FlatError::DegenerateEigenvalues { .. }
        | FlatError::NeedsMoreEigenvalues { .. }
        | FlatError::Resonance { .. } => EXIT_EIGS,
        FlatError::Io(_) | FlatError::Csv(_) => EXIT_IO,
        _ => EXIT_SOLVER,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config_path) = cli.config else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(EXIT_CONFIG);
    };
    let source = match std::fs::read(&config_path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config_path.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let hash = sha256_hex(&source);
    let config = match std::str::from_utf8(&source)
        .map_err(|e| FlatError::Config(format!("config is not UTF-8: {e}")))
        .and_then(parse_config)
    {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {e}", config_path.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let config_dir = config_path.parent().map(PathBuf::from).unwrap_or_default();
    let out_dir = commands::resolve_out_dir(&config, &config_dir, cli.out);
    let run = Run {
        config,
        config_dir,
        quiet: cli.quiet,
    };
    let mut out = Artifacts::new(&out_dir, cli.command.name(), hash);
    let result = match cli.command {
        Command::Mesh => commands::mesh(&run, &mut out),
        Command::Eigs => commands::eigs(&run, &mut out),
        Command::FiberPoint => commands::fiber_point(&run, &mut out),
        Command::TraceFiber => commands::trace_fiber(&run, &mut out),
        Command::Solve => commands::solve(&run, &mut out),
    };
    let complete = result.is_ok();
    let has_files = out.names().next().is_some();
    if complete || has_files {
        match out.commit(complete) {
            Ok(paths) => {
                if !run.quiet {
                    for p in paths {
                        commands::say(&format!("wrote {}", p.display()));
                    }
                }
            }
            Err(e) => {
                eprintln!("error: writing to {}: {e}", out_dir.display());
                return ExitCode::from(EXIT_IO);
            }
        }
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
