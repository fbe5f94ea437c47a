use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use volgeo::{commands, exit, RunConfig};

/// Geodesics in the space of volume forms: perturbed solves, continuation
/// ladders, numerical verification and right-hand-side checks.
#[derive(Parser)]
#[command(name = "volgeo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration; defaults are used for missing keys.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration entry by dotted path, e.g. `geometry.nx=128`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (same as `--set output.directory=DIR`).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> volgeo::Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref(), &self.overrides)?;
        if let Some(dir) = &self.out {
            cfg.output.directory = dir.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve at a single level.
    Solve(ConfigArgs),
    /// Run the continuation ladder down to `solver.eps_min`.
    Ladder(ConfigArgs),
    /// Run the numerical identity, linearization and concavity checks.
    Verify(ConfigArgs),
    /// Regularity record and growth constants of the configured `f`.
    Checkf(ConfigArgs),
    /// Merge ladder CSVs into one long-format CSV.
    Report {
        /// Ladder CSVs written by `ladder`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(short, long, default_value = "report.csv")]
        out: PathBuf,
    },
    /// Write the endpoint, coefficient, curvature and target fields.
    Inputs(ConfigArgs),
}

fn run(cli: Cli) -> volgeo::Result<u8> {
    match cli.command {
        Command::Solve(a) => commands::solve(&a.load()?),
        Command::Ladder(a) => commands::ladder(&a.load()?),
        Command::Verify(a) => commands::verify(&a.load()?),
        Command::Checkf(a) => commands::checkf(&a.load()?),
        Command::Report { inputs, out } => commands::report(&inputs, &out),
        Command::Inputs(a) => commands::dump_inputs(&a.load()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                exit::INVALID_CONFIG
            } else {
                exit::OK
            });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("volgeo: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
