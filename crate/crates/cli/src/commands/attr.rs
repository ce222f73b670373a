use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;
use serde::Deserialize;

use v2v_core::data::load;
use v2v_core::evaluation::{attribute_topk, AttributeTask};
use v2v_core::{Error, Result};

use crate::commands::manifest_path;
use crate::manifest::ManifestBuilder;
use crate::report::{append_report, ReportRow};

#[derive(Args)]
pub struct AttrArgs {
    /// Document embeddings (typically translated).
    #[arg(long)]
    pub docs: PathBuf,
    /// Candidate attribute embeddings, in the same space as the documents.
    #[arg(long)]
    pub attrs: PathBuf,
    /// JSON file with per-document label sets: {"labels": [[0], [2, 3], ...]}.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value = "unnamed")]
    pub pair: String,
    #[arg(long, default_value = "unnamed")]
    pub dataset: String,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Deserialize)]
struct LabelsFile {
    labels: Vec<Vec<usize>>,
}

pub fn run(args: AttrArgs) -> Result<ExitCode> {
    let docs = load(&args.docs)?;
    let attrs = load(&args.attrs)?;
    let raw = std::fs::read(&args.labels).map_err(|e| Error::io(args.labels.clone(), e))?;
    let labels: LabelsFile = serde_json::from_slice(&raw)
        .map_err(|e| Error::Config(format!("{}: {e}", args.labels.display())))?;

    let task = AttributeTask {
        doc_embeddings: docs.vectors.clone(),
        attribute_embeddings: attrs.vectors.clone(),
        true_labels: labels.labels,
        k: args.k,
    };
    let accuracy = attribute_topk(&task)?;

    let mut manifest = ManifestBuilder::new("attr")
        .input(&args.docs)
        .input(&args.attrs)
        .input(&args.labels);

    if let Some(report) = &args.report {
        let row = ReportRow {
            pair: args.pair.clone(),
            method: format!("attr_top{}", args.k),
            dataset: args.dataset.clone(),
            mean_cos: None,
            stderr_cos: None,
            top1: Some(accuracy),
            mean_rank: None,
            stderr_rank: None,
            n: Some(docs.len()),
            flag: "attribute".to_string(),
        };
        append_report(report, &[row])?;
        manifest.output(report);
        manifest.write(&manifest_path(report, &args.manifest))?;
    } else {
        manifest.write(&manifest_path(&args.docs, &args.manifest))?;
    }

    println!("attr: top-{} accuracy {accuracy:.6} over {} docs", args.k, docs.len());
    Ok(ExitCode::SUCCESS)
}
