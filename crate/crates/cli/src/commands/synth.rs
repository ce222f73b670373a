use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;
use serde::Serialize;

use v2v_core::data::{generate_synthetic_world, save, WorldConfig};
use v2v_core::{Error, Result, RngSeed};

use crate::manifest::ManifestBuilder;

#[derive(Args)]
pub struct SynthArgs {
    /// World configuration JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for the embedding files.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write into a non-empty directory.
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Serialize)]
struct LabelsFile {
    labels: Vec<Vec<usize>>,
}

pub fn run(args: SynthArgs) -> Result<ExitCode> {
    let raw = std::fs::read(&args.config).map_err(|e| Error::io(args.config.clone(), e))?;
    let config: WorldConfig = serde_json::from_slice(&raw)
        .map_err(|e| Error::Config(format!("{}: {e}", args.config.display())))?;
    config.validate()?;

    if args.out_dir.exists() {
        let non_empty = std::fs::read_dir(&args.out_dir)
            .map_err(|e| Error::io(args.out_dir.clone(), e))?
            .next()
            .is_some();
        if non_empty && !args.force {
            return Err(Error::Config(format!(
                "output directory {} is not empty (use --force to overwrite)",
                args.out_dir.display()
            )));
        }
    } else {
        std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(args.out_dir.clone(), e))?;
    }

    let world = generate_synthetic_world(&config, RngSeed(args.seed))?;

    let mut manifest = ManifestBuilder::new("synth")
        .config(&args.config)
        .seed(args.seed);

    let write_set = |name: &str, set: &v2v_core::EmbeddingSet| -> Result<PathBuf> {
        let path = args.out_dir.join(name);
        save(set, &path)?;
        Ok(path)
    };
    let mut outputs = vec![
        write_set("train_u.emb", &world.train_u)?,
        write_set("train_v.emb", &world.train_v)?,
        write_set("eval_u.emb", &world.eval_u)?,
        write_set("eval_v.emb", &world.eval_v)?,
    ];
    if let (Some(a1), Some(a2)) = (&world.attr_space1, &world.attr_space2) {
        outputs.push(write_set("attrs_space1.emb", a1)?);
        outputs.push(write_set("attrs_space2.emb", a2)?);
        let labels = LabelsFile {
            labels: world.eval_labels.iter().map(|&c| vec![c]).collect(),
        };
        let labels_path = args.out_dir.join("labels.json");
        std::fs::write(&labels_path, serde_json::to_vec_pretty(&labels)?)
            .map_err(|e| Error::io(labels_path.clone(), e))?;
        outputs.push(labels_path);
    }
    let config_echo = args.out_dir.join("world_config.json");
    std::fs::write(&config_echo, serde_json::to_vec_pretty(&config)?)
        .map_err(|e| Error::io(config_echo.clone(), e))?;
    outputs.push(config_echo);

    for path in &outputs {
        manifest.output(path);
    }
    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| args.out_dir.join("manifest.json"));
    manifest.write(&manifest_path)?;

    println!(
        "synth: wrote {} files to {} (seed {})",
        outputs.len(),
        args.out_dir.display(),
        args.seed
    );
    Ok(ExitCode::SUCCESS)
}
