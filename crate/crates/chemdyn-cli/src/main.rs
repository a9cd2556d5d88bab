//! `chemdyn` — run simulator scenarios from JSON configs.
//!
//! Exit codes: 0 success, 1 runtime/IO failure, 2 config validation failure,
//! 3 resource cap exceeded, 4 numerical contract violated.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use chemdyn_cli::config::{load_scenario, BUILTINS, KINDS};
use chemdyn_cli::run::{emit_figures, run_scenario, validate_scenario};
use chemdyn_cli::CliError;

#[derive(Parser)]
#[command(
    name = "chemdyn",
    version,
    about = "Grid-based quantum dynamics scenarios: propagation, gate-level checks, rates, and resource analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario config and print its canonical hash.
    Validate {
        /// Scenario JSON file.
        config: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the simulator qubit cap.
        #[arg(long)]
        qubit_cap: Option<usize>,
    },
    /// Run a scenario and write its outputs and manifest.
    Run {
        /// Scenario JSON file.
        config: PathBuf,
        /// Output directory (created if missing; nothing is written elsewhere).
        #[arg(long, short)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the simulator qubit cap.
        #[arg(long)]
        qubit_cap: Option<usize>,
        /// Worker threads for parallel sections (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List scenario kinds and built-in potentials.
    ListBuiltins,
    /// Write the reference resource-analysis tables.
    EmitFigures {
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { config, seed, qubit_cap } => {
            let sc = load_scenario(&config, seed, qubit_cap)?;
            validate_scenario(&sc)?;
            println!("ok: {} scenario, config hash {}", sc.kind.name(), sc.hash);
            Ok(())
        }
        Command::Run { config, out, seed, qubit_cap, threads } => {
            if let Some(t) = threads {
                // A second initialization (tests, repeated calls) keeps the
                // first pool; that is fine.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
            }
            let sc = load_scenario(&config, seed, qubit_cap)?;
            let manifest = run_scenario(&sc, &out)?;
            for name in &manifest.outputs {
                println!("wrote {}", out.join(name).display());
            }
            println!("ok: {} scenario, config hash {}", manifest.kind, manifest.config_hash);
            Ok(())
        }
        Command::ListBuiltins => {
            println!("scenario kinds:");
            for kind in KINDS {
                println!("  {kind}");
            }
            println!();
            println!("built-in potentials:");
            for b in BUILTINS {
                println!("  {:<18} {}", b.name, b.summary);
                if !b.params.is_empty() {
                    let params: Vec<String> = b
                        .params
                        .iter()
                        .map(|p| match p.default {
                            Some(d) => format!("{} (default {d})", p.name),
                            None => format!("{} (required)", p.name),
                        })
                        .collect();
                    println!("  {:<18} params: {}", "", params.join(", "));
                }
                if b.min_axes > 1 {
                    println!("  {:<18} needs at least {} axes", "", b.min_axes);
                }
            }
            Ok(())
        }
        Command::EmitFigures { out } => {
            let manifest = emit_figures(&out)?;
            for name in &manifest.outputs {
                println!("wrote {}", out.join(name).display());
            }
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
