use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use semicert::harness::{run_config, Mode, Overrides};

#[derive(Parser)]
#[command(name = "solver", version, about = "Semilinear elliptic solver with certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline selected by the config's `mode`.
    Run {
        config: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Falsify the structural conditions without solving.
    Audit {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the blow-up study.
    Counterexample {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (config, overrides, forced) = match cli.command {
        Command::Run { config, tol, out, seed } => (config, Overrides { tol, out, seed }, None),
        Command::Audit { config, out, seed } => (config, Overrides { tol: None, out, seed }, Some(Mode::Audit)),
        Command::Counterexample { config, out } => (
            config,
            Overrides {
                out,
                ..Overrides::default()
            },
            Some(Mode::Counterexample),
        ),
    };
    match run_config(&config, &overrides, forced) {
        Ok(outcome) => {
            if let Some(e) = &outcome.error {
                eprintln!("error: {e}");
            }
            for c in &outcome.certificate.checks {
                println!("{:<22} {}", c.name, c.verdict);
            }
            println!("report: {}", outcome.report_path.display());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit().code() as u8)
        }
    }
}
