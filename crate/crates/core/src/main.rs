use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qpwgan::experiments::{
    self, ExperimentConfig, ExperimentKind, Overrides, EXIT_CONFIG_ERROR, EXIT_PROPERTY_FAILURE,
};
use qpwgan::Error;

/// Desk-scale (q,p)-Wasserstein GAN experiments.
#[derive(Parser)]
#[command(name = "qpwgan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the exact solver, c-transform and gradients against reference computations.
    OracleCheck(Flags),
    /// Fit a few free atoms to a discrete target.
    ToyDiscrete(Flags),
    /// Train generators on the three-cluster Gaussian mixture.
    ToyGmm(Flags),
    /// Map source samples with the transport map of a trained critic.
    PotentialGenerator(Flags),
    /// Histogram of distances from generated samples to the training set.
    NnDistance(Flags),
}

#[derive(Args)]
struct Flags {
    /// JSON config; keys not given fall back to the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces every seed in the config
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cost exponent.
    #[arg(long)]
    p: Option<f64>,
    /// Ground metric exponent.
    #[arg(long)]
    q: Option<f64>,
    /// Training iterations (optimizer steps for toy-discrete).
    #[arg(long)]
    iterations: Option<usize>,
    /// Number of model atoms (toy-discrete).
    #[arg(long)]
    k: Option<usize>,
    /// Number of samples (nn-distance, potential-generator).
    #[arg(long)]
    n: Option<usize>,
    /// Histogram bin width (nn-distance)
    #[arg(long)]
    bin_width: Option<f64>,
    /// Generator checkpoint written by toy-gmm (nn-distance)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// CSV of training points with a header row (nn-distance)
    #[arg(long)]
    training_data: Option<PathBuf>,
    /// Shift every dual potential before the duality checks (oracle-check).
    #[arg(long, allow_hyphen_values = true)]
    perturb_duals: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG_ERROR as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (kind, f) = match cli.command {
        Command::OracleCheck(f) => (ExperimentKind::OracleCheck, f),
        Command::ToyDiscrete(f) => (ExperimentKind::ToyDiscrete, f),
        Command::ToyGmm(f) => (ExperimentKind::ToyGmm, f),
        Command::PotentialGenerator(f) => (ExperimentKind::PotentialGenerator, f),
        Command::NnDistance(f) => (ExperimentKind::NnDistance, f),
    };
    let overrides = Overrides {
        seed: f.seed,
        out: f.out,
        p: f.p,
        q: f.q,
        iterations: f.iterations,
        k: f.k,
        n: f.n,
        bin_width: f.bin_width,
        checkpoint: f.checkpoint,
        training_data: f.training_data,
        perturb_duals: f.perturb_duals,
    };
    let cfg = match ExperimentConfig::load(kind, f.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("qpwgan: {e}");
            return ExitCode::from(EXIT_CONFIG_ERROR as u8);
        }
    };
    match experiments::run(&cfg) {
        Ok(summary) => {
            if let Some(report) = &summary.report {
                for p in &report.properties {
                    println!(
                        "{:<26} {} checked {:>4} skipped {:>4} worst {:.3e}",
                        p.name,
                        if p.passed { "PASS" } else { "FAIL" },
                        p.checked,
                        p.skipped,
                        p.worst
                    );
                }
            }
            println!(
                "{} wrote {} files to {}",
                kind.name(),
                summary.manifest.files.len(),
                summary.out_dir.display()
            );
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(Error::Config(msg)) => {
            eprintln!("qpwgan: config: {msg}");
            ExitCode::from(EXIT_CONFIG_ERROR as u8)
        }
        Err(e) => {
            eprintln!("qpwgan: {e}");
            ExitCode::from(EXIT_PROPERTY_FAILURE as u8)
        }
    }
}
