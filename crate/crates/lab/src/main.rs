use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hemivar_lab::{run, validate_path, RunOptions};

/// Finite-element experiments for unilateral hemivariational inequalities.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (overrides `out_dir` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel parts (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Check a config file without solving anything.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    match cli.command {
        Command::Validate { config } => match validate_path(&config, cli.seed) {
            Ok(diag) => {
                emit(&diag.to_string());
                if diag.ok() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(2)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
        Command::Run { config } => {
            let opts = RunOptions {
                out: cli.out,
                seed: cli.seed,
            };
            match run(&config, &opts) {
                Ok(res) => {
                    emit(&res.summary.render());
                    emit(&format!(
                        "wrote {} files to {}\n",
                        res.files.len() + 1,
                        res.out_dir.display()
                    ));
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    let mut src = std::error::Error::source(&e);
                    while let Some(s) = src {
                        eprintln!("  caused by: {s}");
                        src = s.source();
                    }
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}

// A closed pipe (`| head`) is not an error worth panicking over.
fn emit(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}
