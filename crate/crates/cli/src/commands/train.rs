use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;
use serde::Serialize;

use v2v_core::data::load;
use v2v_core::trainer::{multi_seed_select, subsample, SeedScore, TrainConfig};
use v2v_core::translator::save_checkpoint;
use v2v_core::{Error, Result, RngSeed};

use crate::commands::manifest_path;
use crate::manifest::ManifestBuilder;
use crate::report::write_history;

#[derive(Args)]
pub struct TrainArgs {
    /// Training configuration JSON (net dims of 0 are filled from the data).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub input_u: PathBuf,
    #[arg(long)]
    pub input_v: PathBuf,
    /// Checkpoint of the selected translator.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss-history CSV of the selected run.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Override the configured step count.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Override the configured seed list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Drop the cycle-consistency loss.
    #[arg(long)]
    pub no_cc: bool,
    /// Drop the vector-space-preservation loss.
    #[arg(long)]
    pub no_vsp: bool,
    /// Drop the reconstruction loss.
    #[arg(long)]
    pub no_rec: bool,
    /// Drop the latent-level discriminators.
    #[arg(long)]
    pub no_latent_gan: bool,
    /// Train on a random subsample of the space-1 set.
    #[arg(long)]
    pub subsample_u: Option<usize>,
    /// Train on a random subsample of the space-2 set.
    #[arg(long)]
    pub subsample_v: Option<usize>,
    /// Seed for the subsampling draws.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Serialize)]
struct TrainRecord {
    config: TrainConfig,
    winner_seed: u64,
    scores: Vec<SeedScore>,
    n_train_u: usize,
    n_train_v: usize,
}

pub fn run(args: TrainArgs) -> Result<ExitCode> {
    let raw = std::fs::read(&args.config).map_err(|e| Error::io(args.config.clone(), e))?;
    let mut config: TrainConfig = serde_json::from_slice(&raw)
        .map_err(|e| Error::Config(format!("{}: {e}", args.config.display())))?;

    let mut set_u = load(&args.input_u)?;
    let mut set_v = load(&args.input_v)?;
    if let Some(n) = args.subsample_u {
        set_u = subsample(&set_u, n, RngSeed(args.seed).derive("u"))?;
    }
    if let Some(n) = args.subsample_v {
        set_v = subsample(&set_v, n, RngSeed(args.seed).derive("v"))?;
    }

    if config.net.d1 == 0 {
        config.net.d1 = set_u.dim();
    }
    if config.net.d2 == 0 {
        config.net.d2 = set_v.dim();
    }
    if let Some(steps) = args.steps {
        config.steps = steps;
    }
    if let Some(seeds) = &args.seeds {
        config.seeds = seeds.clone();
    }
    // Ablation flags zero the matching λ in the recorded config.
    if args.no_cc {
        config.ablation.no_cc = true;
        config.weights.lambda_cc = 0.0;
    }
    if args.no_vsp {
        config.ablation.no_vsp = true;
        config.weights.lambda_vsp = 0.0;
    }
    if args.no_rec {
        config.ablation.no_rec = true;
        config.weights.lambda_rec = 0.0;
    }
    if args.no_latent_gan {
        config.ablation.no_latent_gan = true;
    }

    let outcome = multi_seed_select(&config, &set_u, &set_v)?;
    save_checkpoint(&outcome.best.net, &args.out)?;

    let mut manifest = ManifestBuilder::new("train")
        .config(&args.config)
        .input(&args.input_u)
        .input(&args.input_v)
        .seed(outcome.best.seed);
    manifest.output(&args.out);

    if let Some(history_path) = &args.history {
        write_history(history_path, &outcome.best.history)?;
        manifest.output(history_path);
    }

    let record = TrainRecord {
        config,
        winner_seed: outcome.best.seed,
        scores: outcome.scores.clone(),
        n_train_u: set_u.len(),
        n_train_v: set_v.len(),
    };
    let record_path = args.out.with_extension("train.json");
    std::fs::write(&record_path, serde_json::to_vec_pretty(&record)?)
        .map_err(|e| Error::io(record_path.clone(), e))?;
    manifest.output(&record_path);

    manifest.write(&manifest_path(&args.out, &args.manifest))?;

    println!(
        "train: seed {} selected (val proxy {:.6}) out of {:?}; checkpoint {}",
        outcome.best.seed,
        outcome.best.val_proxy,
        outcome.scores.iter().map(|s| s.seed).collect::<Vec<_>>(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}
