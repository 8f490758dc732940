use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use smlab::{run, ExitStatus, ExperimentConfig, Mode};

#[derive(Parser)]
#[command(name = "smlab", version, about = "Solve and audit the singular coupled elliptic system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the regularization ladder and write the report.
    Solve(Common),
    /// Solve, then run every audit; exit 4 on a violation.
    Verify(Common),
    /// Tabulate regime verdicts over the exponent grid.
    Exponents(Common),
    /// Solve, then check the saddle inequalities on the last rung.
    Saddle(Common),
    /// Manufactured-solution refinement of the diffusion operators.
    ConvergenceStudy(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML, dotted keys).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides `solver.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Only print errors.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match cli.command {
        Command::Solve(a) => (Mode::Solve, a),
        Command::Verify(a) => (Mode::Verify, a),
        Command::Exponents(a) => (Mode::Exponents, a),
        Command::Saddle(a) => (Mode::Saddle, a),
        Command::ConvergenceStudy(a) => (Mode::ConvergenceStudy, a),
    };
    let mut config = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("smlab: {e}");
            return ExitCode::from(ExitStatus::InvalidConfig.code());
        }
    };
    config.mode = mode;
    if let Some(seed) = args.seed {
        config.solver.seed = seed;
    }

    let outcome = match run(&config, &args.out) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("smlab: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    for d in &outcome.diagnostics.0 {
        eprintln!("smlab: {d}");
    }
    if !args.quiet {
        for line in &outcome.summary {
            println!("{line}");
        }
        for path in &outcome.artifacts {
            println!("wrote {}", path.display());
        }
    } else if outcome.status != ExitStatus::Success {
        for line in outcome.summary.iter().filter(|l| l.starts_with("violation") || l.starts_with("stopped")) {
            eprintln!("smlab: {line}");
        }
    }
    ExitCode::from(outcome.status.code())
}
