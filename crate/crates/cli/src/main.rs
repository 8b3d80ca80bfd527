//! `cband`: feature extraction, scoring, training, benchmarking,
//! subjective-score recovery and stimulus synthesis.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error. Failures print a
//! JSON object `{"schema_version", "error": {"kind", "message"}}` on stderr.

mod benchmark;
mod export;
mod extract;
mod output;
mod score;
mod sureal;
mod synth;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "cband",
    version,
    about = "Banding-aware no-reference video quality assessment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract per-frame NSS features of backbone activations into a feature cache
    Extract(extract::Args),
    /// Score a video (or a feature cache) with a trained model
    Score(score::Args),
    /// Train the quality regressor on feature caches and MOS
    Train(train::Args),
    /// Run the repeated content-disjoint train/test protocol
    Benchmark(benchmark::Args),
    /// Recover true scores, subject bias/inconsistency and content ambiguity from raw ratings
    Sureal(sureal::Args),
    /// Generate synthetic banding stimuli
    Synth(synth::Args),
    /// Write a seeded-weight backbone graph and its manifest
    ExportBackbone(export::Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Extract(a) => extract::run(a),
        Command::Score(a) => score::run(a),
        Command::Train(a) => train::run(a),
        Command::Benchmark(a) => benchmark::run(a),
        Command::Sureal(a) => sureal::run(a),
        Command::Synth(a) => synth::run(a),
        Command::ExportBackbone(a) => export::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => output::report_error(&err),
    }
}
