use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod io;

/// Sequence-to-point energy disaggregation: train, predict, evaluate and
/// transfer models from household mains readings.
#[derive(Debug, Parser)]
#[command(name = "nilm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model for one appliance on the houses of its training split.
    Train(commands::TrainArgs),
    /// Predict appliance power from a mains file.
    Predict(commands::PredictArgs),
    /// Score checkpoints on their appliances' test houses.
    Evaluate(commands::EvaluateArgs),
    /// Reuse a trained model for another appliance or another dataset.
    #[command(subcommand)]
    Transfer(TransferCommand),
    /// Dump last-conv-layer activations for a range of windows.
    Features(commands::FeaturesArgs),
    /// Generate a synthetic household.
    Synth(commands::SynthArgs),
}

#[derive(Debug, Subcommand)]
enum TransferCommand {
    /// Keep the source conv stack, retrain the dense head for a new appliance.
    Atl(commands::AtlArgs),
    /// Apply the source model to another dataset, optionally fine-tuning it.
    Ctl(commands::CtlArgs),
}

/// Options shared by every command that touches data or training.
#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Window length in samples [default: 599, or the source model's].
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 50)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 5)]
    pub min_epochs: usize,
    /// Sampling period in seconds.
    #[arg(long, default_value_t = 8)]
    pub period: i64,
    /// Gaps longer than this many seconds split a recording.
    #[arg(long, default_value_t = 3600)]
    pub max_gap: i64,
    /// TOML file overriding the built-in normalization constants.
    #[arg(long)]
    pub norm_config: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<nilm::Error>()) {
        Some(e) if e.is_config() => 2,
        Some(e) if e.is_checkpoint() => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Transfer(TransferCommand::Atl(a)) => commands::transfer_atl(&a),
        Command::Transfer(TransferCommand::Ctl(a)) => commands::transfer_ctl(&a),
        Command::Features(a) => commands::features(&a),
        Command::Synth(a) => commands::synth(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
