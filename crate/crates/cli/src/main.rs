use std::path::PathBuf;

use clap::{Parser, Subcommand};

use fafcnn_cli::commands::{
    cmd_ablate, cmd_audit, cmd_eval, cmd_heatmap, cmd_prepare, cmd_sweep, cmd_train,
};
use fafcnn_cli::config::{resolve, Overrides};

#[derive(Parser)]
#[command(
    name = "fafcnn",
    version,
    about = "Train and evaluate the feature-aligned classification pipeline"
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Impute, perturb, split, and standardize the raw table, one artifact
    /// per seed.
    Prepare,
    /// Train the configured variant on every prepared seed.
    Train,
    /// Evaluate trained checkpoints on their held-out test splits.
    Eval,
    /// Run prepare, train, and eval across the configured perturbation
    /// ratios.
    Sweep,
    /// Train all four variants on one prepared dataset and tabulate their
    /// gains over the supervised baseline.
    Ablate,
    /// Average pairwise attention weights over test samples into a matrix
    /// per run.
    Heatmap {
        /// Run directories holding checkpoints (defaults to the output
        /// directory itself).
        #[arg(long)]
        runs: Vec<PathBuf>,
    },
    /// Compare analytic gradients against central differences at trained
    /// checkpoints.
    Audit {
        /// Parameter probes per loss term.
        #[arg(long, default_value_t = 70)]
        probes: usize,
        /// Maximum allowed relative error.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let config = match resolve(&cli.overrides) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    };
    let result = match cli.command {
        Command::Prepare => cmd_prepare(&config),
        Command::Train => cmd_train(&config),
        Command::Eval => cmd_eval(&config),
        Command::Sweep => cmd_sweep(&config),
        Command::Ablate => cmd_ablate(&config),
        Command::Heatmap { runs } => cmd_heatmap(&config, &runs),
        Command::Audit { probes, tolerance } => cmd_audit(&config, probes, tolerance),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
