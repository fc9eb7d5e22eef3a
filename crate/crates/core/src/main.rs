use clap::{Parser, Subcommand};
use sded::cli::{self, Overrides};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "sded",
    about = "Two-stage stochastic dynamic economic dispatch with storage",
    version
)]
struct Args {
    /// TOML run configuration.
    #[arg(long, global = true, default_value = "run.toml")]
    config: PathBuf,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the solver (internal, internal-fastpath, external:<cmd>).
    #[arg(long, global = true)]
    solver: Option<String>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the bus-level scenario set and write it as CSV.
    Scenarios,
    /// Build and solve one dispatch problem; write dispatch and cost
    /// reports.
    Solve,
    /// Run the (penetration x BESS size) sensitivity sweep.
    Sweep,
    /// Write the extensive-form model in MPS format.
    ExportMps,
    /// Recompute savings/curtailment curves from a saved sweep.csv.
    Report,
}

fn main() {
    let args = Args::parse();
    let overrides = Overrides {
        seed: args.seed,
        solver: args.solver.clone(),
        out: args.out.clone(),
    }
    .with_env();

    let config = match cli::load_config(&args.config, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code);
        }
    };

    let result = match args.command {
        Command::Scenarios => cli::cmd_scenarios(&config),
        Command::Solve => cli::cmd_solve(&config),
        Command::Sweep => cli::cmd_sweep(&config).map(|_| ()),
        Command::ExportMps => cli::cmd_export_mps(&config),
        Command::Report => cli::cmd_report(&config),
    };

    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code);
    }
}
