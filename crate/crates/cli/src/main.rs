use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hps_cli::{commands, Command, Overrides};

#[derive(Parser)]
#[command(
    name = "hps",
    version,
    about = "Homogeneous perfect sets under quasisymmetric maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the set description and report every violated invariant.
    Validate(RunArgs),
    /// Build the basic intervals and the star system, and verify them.
    Construct(RunArgs),
    /// Build the branch hierarchy and verify its properties and bounds.
    Hierarchy(RunArgs),
    /// Dimension formula and box counts of the set and its image.
    Dim(RunArgs),
    /// Empirical distortion envelope of the configured map.
    Probe(RunArgs),
    /// Branch measures on the image hierarchy and their scans.
    Measure(RunArgs),
    /// The full pipeline.
    Experiment(RunArgs),
    /// List map variants and generator kinds.
    Catalog,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file.
    config: PathBuf,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let (command, args) = match cli.command {
        Cmd::Validate(a) => (Command::Validate, a),
        Cmd::Construct(a) => (Command::Construct, a),
        Cmd::Hierarchy(a) => (Command::Hierarchy, a),
        Cmd::Dim(a) => (Command::Dim, a),
        Cmd::Probe(a) => (Command::Probe, a),
        Cmd::Measure(a) => (Command::Measure, a),
        Cmd::Experiment(a) => (Command::Experiment, a),
        Cmd::Catalog => {
            let text = serde_json::to_string_pretty(&commands::list_catalog())
                .expect("catalog serialises");
            // A closed pipe (`hps catalog | head`) is not an error.
            let _ = writeln!(std::io::stdout(), "{text}");
            return ExitCode::SUCCESS;
        }
    };
    let overrides = Overrides {
        depth: args.depth,
        seed: args.seed,
        out: args.out,
    };
    match hps_cli::run(command, &args.config, &overrides) {
        Ok(summary) => {
            let _ = writeln!(
                std::io::stdout(),
                "{}: {} ({})",
                command.name(),
                summary.headline,
                summary.out.display()
            );
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("hps {}: {err}", command.name());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
