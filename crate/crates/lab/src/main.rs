use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use singular_flow::{output_dir, run_to_dir, Scenario, Stage};

#[derive(Parser)]
#[command(
    name = "singular-flow",
    version,
    about = "Transport and flows past fractal singular sets"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Box-counting and Minkowski dimension of the configured sets.
    Dimension(RunArgs),
    /// Codimension print scan.
    Print(RunArgs),
    /// Well-posedness conditions for the configured field.
    Conditions(RunArgs),
    /// Trajectory ensemble.
    Flow(RunArgs),
    /// Avoidance statistics (integrates the flow first).
    Avoidance(RunArgs),
    /// Semi-Lagrangian transport and renormalization residuals.
    Transport(RunArgs),
    /// Coupled particles and point vortex.
    VortexWave(RunArgs),
    /// Every stage listed in the scenario's pipeline.
    All(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 = all cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let (args, stage) = match cli.cmd {
        Cmd::Dimension(a) => (a, Some(Stage::Dimension)),
        Cmd::Print(a) => (a, Some(Stage::Print)),
        Cmd::Conditions(a) => (a, Some(Stage::Conditions)),
        Cmd::Flow(a) => (a, Some(Stage::Flow)),
        Cmd::Avoidance(a) => (a, Some(Stage::Avoidance)),
        Cmd::Transport(a) => (a, Some(Stage::Transport)),
        Cmd::VortexWave(a) => (a, Some(Stage::VortexWave)),
        Cmd::All(a) => (a, None),
    };
    let mut sc = Scenario::load(&args.config)?;
    if let Some(s) = args.seed {
        sc.seed = s;
    }
    if let Some(t) = args.threads {
        sc.threads = t;
    }
    let stages = match stage {
        Some(s) => vec![s],
        None => sc.pipeline.clone(),
    };
    let dir = output_dir(&sc, args.out.as_deref());
    let report = run_to_dir(&sc, &stages, &dir)?;
    // a closed pipe must not turn a finished run into a failure
    let mut out = std::io::stdout().lock();
    let _ = write!(out, "{}", report.summary());
    let _ = writeln!(out, "artifacts in {}", dir.display());
    Ok(report.passed())
}
