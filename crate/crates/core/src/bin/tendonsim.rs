use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tendonsim::scenario::run_batch;

#[derive(Parser)]
#[command(name = "tendonsim", version, about = "Tendon-driven continuum robot simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time-domain simulation (mode `simulate`).
    Simulate(RunArgs),
    /// Stiffness probes and sweeps (modes `probe`, `sweep_mu`, `sweep_gamma`).
    Sweep(RunArgs),
    /// Synthetic static dataset and parameter fit (mode `identify`).
    Identify(RunArgs),
    /// Assignable-equilibrium checks (mode `equilibria`).
    Equilibria(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario files.
    #[arg(required = true)]
    scenarios: Vec<PathBuf>,
    /// Output root; each scenario writes into `<DIR>/<name>`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Scenario files run concurrently.
    #[arg(long, value_name = "N", default_value_t = 1)]
    jobs: usize,
    /// Reject unknown keys (default).
    #[arg(long, overrides_with = "lenient")]
    strict: bool,
    /// Warn about unknown keys instead of rejecting them.
    #[arg(long, overrides_with = "strict")]
    lenient: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (verb, args) = match &cli.command {
        Command::Simulate(a) => ("simulate", a),
        Command::Sweep(a) => ("sweep", a),
        Command::Identify(a) => ("identify", a),
        Command::Equilibria(a) => ("equilibria", a),
    };
    let strict = !args.lenient;
    let results = run_batch(verb, &args.scenarios, args.out.as_deref(), args.jobs, strict);
    let mut ok = true;
    for r in results {
        match r {
            Ok(report) => {
                print!("{}", report.summary());
                ok &= report.passed();
            }
            Err(e) => {
                eprintln!("error: {e}");
                ok = false;
            }
        }
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
