use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cmc_core::cli::{self, EXIT_CONFIG};

/// CMC cylinders with umbilics: validation, monodromy, surfaces and oracles.
#[derive(Parser)]
#[command(name = "cmc", version)]
struct Args {
    /// JSON run configuration; defaults are used when absent.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a configuration entry, e.g. `--set lambda_grid.L=512`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Continue past failed hypotheses; recorded in the report.
    #[arg(long, global = true)]
    force: bool,
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check symmetry and kappa hypotheses, list umbilics.
    Validate,
    /// Monodromy report and trace profile.
    Monodromy,
    /// Full pipeline to a closed mesh.
    Surface,
    /// Closed-form cross-checks.
    Oracle,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match cli::load_config(args.config.as_deref(), &args.set) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("cmc: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let out = match args.command {
        Command::Validate => cli::cmd_validate(&cfg),
        Command::Monodromy => cli::cmd_monodromy(&cfg, args.force),
        Command::Surface => cli::cmd_surface(&cfg, args.force),
        Command::Oracle => cli::cmd_oracle(&cfg),
    };
    if !args.quiet {
        for line in &out.summary {
            println!("{line}");
        }
    }
    ExitCode::from(out.code as u8)
}
