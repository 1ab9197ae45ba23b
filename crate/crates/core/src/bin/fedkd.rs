use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedkd::bench::{load_config, run_experiment, Arm, ExperimentKind, RunOptions};

#[derive(Parser)]
#[command(
    name = "fedkd",
    version,
    about = "Federated distillation experiments on synthetic multi-domain data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured arms for every seed.
    Run(Common),
    /// One-round comparison of teacher weightings.
    Ablate(Common),
    /// Projection vs prototype domain classification.
    ProbeDomains(Common),
    /// Replace the server data with the first client's domain and compare.
    ProbeOverlap(Common),
    /// Per-round communication accounting.
    Comm(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    config: PathBuf,
    /// Run only this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Parent directory for results.
    #[arg(long, env = "FEDKD_OUT", default_value = "out")]
    out_dir: PathBuf,
    /// Run a single arm, written `strategy` or `strategy:weighting`.
    #[arg(long)]
    strategy: Option<Arm>,
    /// Suppress progress and the summary table.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Run(a) => (ExperimentKind::Run, a),
        Command::Ablate(a) => (ExperimentKind::Ablate, a),
        Command::ProbeDomains(a) => (ExperimentKind::ProbeDomains, a),
        Command::ProbeOverlap(a) => (ExperimentKind::ProbeOverlap, a),
        Command::Comm(a) => (ExperimentKind::Comm, a),
    };
    match execute(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(kind: ExperimentKind, args: Common) -> fedkd::Result<()> {
    let mut cfg = load_config(&args.config)?;
    cfg.experiment.kind = kind;
    if let Some(seed) = args.seed {
        cfg.experiment.seeds = vec![seed];
    }
    if let Some(arm) = args.strategy {
        cfg.experiment.arms = vec![arm];
    }
    let opts = RunOptions {
        out_dir: Some(args.out_dir.clone()),
        quiet: args.quiet,
    };
    let outcome = run_experiment(&cfg, &opts)?;
    if !args.quiet {
        print!("{}", outcome.summary.render());
        println!("results in {}", args.out_dir.join(&cfg.experiment.name).display());
    }
    Ok(())
}
