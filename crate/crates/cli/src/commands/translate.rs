use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, ValueEnum};

use v2v_core::data::{load, save, EmbeddingSet, SetMeta};
use v2v_core::translator::load_checkpoint;
use v2v_core::Result;

use crate::commands::manifest_path;
use crate::manifest::ManifestBuilder;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    #[value(name = "1to2")]
    OneToTwo,
    #[value(name = "2to1")]
    TwoToOne,
}

#[derive(Args)]
pub struct TranslateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub direction: Direction,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

pub fn run(args: TranslateArgs) -> Result<ExitCode> {
    let net = load_checkpoint(&args.ckpt)?;
    let input = load(&args.input)?;
    let translated = match args.direction {
        Direction::OneToTwo => net.translate_1to2(&input.vectors)?,
        Direction::TwoToOne => net.translate_2to1(&input.vectors)?,
    };
    let direction = match args.direction {
        Direction::OneToTwo => "1to2",
        Direction::TwoToOne => "2to1",
    };
    let out_set = EmbeddingSet::new(
        translated,
        input.ids.clone(),
        SetMeta {
            source: format!("translated.{direction}:{}", input.meta.source),
            dim: match args.direction {
                Direction::OneToTwo => net.config.d2,
                Direction::TwoToOne => net.config.d1,
            },
            normalized: net.config.normalize_output,
            seed: input.meta.seed,
        },
    )?;
    save(&out_set, &args.out)?;

    let mut manifest = ManifestBuilder::new("translate")
        .input(&args.ckpt)
        .input(&args.input);
    manifest.output(&args.out);
    manifest.write(&manifest_path(&args.out, &args.manifest))?;

    println!(
        "translate: {} rows {} -> {}",
        out_set.len(),
        input.meta.dim,
        out_set.dim()
    );
    Ok(ExitCode::SUCCESS)
}
