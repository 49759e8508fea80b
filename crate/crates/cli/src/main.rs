use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mortsim::report::{compare, render_deltas, CompareOptions};
use mortsim::scenario::{run, RunOptions, Scenario};
use mortsim::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

/// Agent-based mortgage servicing simulator.
#[derive(Parser)]
#[command(name = "mortsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train learners and evaluate every shock size and product variant.
    Run {
        config: PathBuf,
        /// Override a config field, e.g. `--set run.seeds=[1]`.
        #[arg(long = "set", value_name = "PATH=VALUE")]
        overrides: Vec<String>,
        /// Output directory; defaults to the config's, then $MORTSIM_OUTPUT_DIR/<config name>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Load learner snapshots from this directory instead of training.
        #[arg(long, value_name = "DIR")]
        snapshots: Option<PathBuf>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print per-quintile metric deltas of run B against run A.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        #[arg(long)]
        variant_a: Option<String>,
        #[arg(long)]
        variant_b: Option<String>,
        /// Also write the table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config and list every problem.
    Validate {
        config: PathBuf,
        #[arg(long = "set", value_name = "PATH=VALUE")]
        overrides: Vec<String>,
    },
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Validation(_) | Error::Config(_) => ExitCode::from(EXIT_VALIDATION),
        _ => ExitCode::from(EXIT_RUNTIME),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config, overrides } => match Scenario::load(&config, &overrides) {
            Ok(_) => {
                println!("OK");
                ExitCode::SUCCESS
            }
            Err(Error::Validation(v)) => {
                for msg in &v {
                    println!("{msg}");
                }
                ExitCode::from(EXIT_VALIDATION)
            }
            Err(e) => fail(&e),
        },
        Command::Run {
            config,
            overrides,
            out,
            snapshots,
            jobs,
        } => {
            let scenario = match Scenario::load(&config, &overrides) {
                Ok(s) => s,
                Err(e) => return fail(&e),
            };
            let options = RunOptions {
                out_dir: out,
                jobs,
                snapshots,
            };
            match run(&scenario, &options) {
                Ok(outcome) => {
                    println!(
                        "wrote {} cells to {}",
                        outcome.manifest.cells.len(),
                        outcome.out_dir.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
        Command::Compare {
            run_a,
            run_b,
            variant_a,
            variant_b,
            out,
        } => {
            let opts = CompareOptions {
                variant_a,
                variant_b,
            };
            match compare(&run_a, &run_b, &opts) {
                Ok(rows) => {
                    let table = render_deltas(&rows);
                    if let Some(path) = out {
                        if let Err(e) = std::fs::write(&path, &table) {
                            return fail(&Error::io(path, e));
                        }
                    }
                    print!("{table}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
    }
}
