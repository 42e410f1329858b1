use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dicke_core::expcli::{exit_code, run, Experiment};

/// Simulate the cavity Raman Dicke experiments and write run records.
#[derive(Parser)]
#[command(name = "dicke-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print derived effective parameters
    Params(Common),
    /// Transmission map across the avoided crossing
    SplittingMap(Common),
    /// Single transmission spectrum with a two-peak fit
    Transmission(Common),
    /// One power ramp with photon-count detection
    Ramp(Common),
    /// Dynamic and static threshold powers versus atom number
    ThresholdMap(Common),
    /// Cross-validation battery on a small system
    QuantumCheck(Common),
}

#[derive(Args)]
struct Common {
    /// configuration file (defaults apply when omitted)
    #[arg(long)]
    config: Option<PathBuf>,
    /// override one key, e.g. --set "ramp.duration=3 ms"
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// output run directory
    #[arg(long)]
    out: PathBuf,
    /// replace an existing output directory
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (exp, c) = match cli.command {
        Command::Params(c) => (Experiment::Params, c),
        Command::SplittingMap(c) => (Experiment::SplittingMap, c),
        Command::Transmission(c) => (Experiment::Transmission, c),
        Command::Ramp(c) => (Experiment::Ramp, c),
        Command::ThresholdMap(c) => (Experiment::ThresholdMap, c),
        Command::QuantumCheck(c) => (Experiment::QuantumCheck, c),
    };
    match run(exp, c.config.as_deref(), &c.overrides, &c.out, c.force) {
        Ok((path, outcome)) => {
            // a closed pipe on stdout is not an error for the run itself
            let mut stdout = std::io::stdout().lock();
            let _ = write!(stdout, "{}", outcome.text);
            let _ = writeln!(stdout, "record written to {}", path.display());
            match outcome.failed_check {
                Some(id) => {
                    eprintln!("error: check {id} failed");
                    ExitCode::from(3)
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
