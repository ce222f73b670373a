//! `v2v`: generate synthetic embedding worlds, train translators between two
//! embedding spaces without paired data, translate vector files, and evaluate
//! against naïve and optimal-transport baselines.

mod commands;
mod manifest;
mod report;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

use v2v_core::Error;

#[derive(Parser)]
#[command(name = "v2v", version, about = "Unsupervised embedding-space translation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-encoder world and write its embedding files.
    Synth(commands::synth::SynthArgs),
    /// Train a translator on two unpaired embedding files.
    Train(commands::train::TrainArgs),
    /// Apply a trained translator to an embedding file.
    Translate(commands::translate::TranslateArgs),
    /// Score a translation against ground-truth embeddings.
    Eval(commands::eval::EvalArgs),
    /// Run the naïve and optimal-transport baselines on a paired set.
    Baseline(commands::baseline::BaselineArgs),
    /// Zero-shot attribute inference over an embedding file.
    Attr(commands::attr::AttrArgs),
    /// Verify analytic gradients against finite differences.
    Gradcheck(commands::gradcheck::GradcheckArgs),
}

fn main() -> ExitCode {
    // V2V_THREADS caps the worker pool; default leaves rayon's heuristics.
    if let Ok(threads) = std::env::var("V2V_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes, not usage errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let result = match cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Translate(args) => commands::translate::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Baseline(args) => commands::baseline::run(args),
        Command::Attr(args) => commands::attr::run(args),
        Command::Gradcheck(args) => commands::gradcheck::run(args),
    };

    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Numerical { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
