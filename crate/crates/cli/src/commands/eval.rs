use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;

use v2v_core::data::load;
use v2v_core::evaluation::eval_translation;
use v2v_core::{Error, Result};

use crate::commands::manifest_path;
use crate::manifest::ManifestBuilder;
use crate::report::{append_report, ReportRow};

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Ranking is confined to chunks of this many rows.
    #[arg(long, default_value_t = 8192)]
    pub chunk: usize,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value = "unnamed")]
    pub pair: String,
    #[arg(long, default_value = "unnamed")]
    pub dataset: String,
    #[arg(long, default_value = "translation")]
    pub method: String,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

pub fn run(args: EvalArgs) -> Result<ExitCode> {
    let pred = load(&args.pred)?;
    let truth = load(&args.truth)?;
    if pred.dim() != truth.dim() {
        return Err(Error::dim("eval inputs", truth.dim(), pred.dim()));
    }
    if pred.len() != truth.len() {
        return Err(Error::dim("eval row counts", truth.len(), pred.len()));
    }

    // One row per chunk, then the overall summary.
    let n = pred.len();
    let mut rows = Vec::new();
    let mut chunk_index = 0usize;
    let mut start = 0usize;
    while start < n {
        let end = (start + args.chunk).min(n);
        let idx: Vec<usize> = (start..end).collect();
        if idx.len() >= 2 {
            let r = eval_translation(
                &pred.vectors.gather_rows(&idx),
                &truth.vectors.gather_rows(&idx),
                args.chunk,
            )?;
            rows.push(ReportRow::from_eval(
                &args.pair,
                &args.method,
                &args.dataset,
                &r,
                &format!("chunk={chunk_index}"),
            ));
        }
        chunk_index += 1;
        start = end;
    }
    let summary = eval_translation(&pred.vectors, &truth.vectors, args.chunk)?;
    rows.push(ReportRow::from_eval(
        &args.pair,
        &args.method,
        &args.dataset,
        &summary,
        "summary",
    ));
    append_report(&args.report, &rows)?;

    let mut manifest = ManifestBuilder::new("eval")
        .input(&args.pred)
        .input(&args.truth);
    manifest.output(&args.report);
    manifest.write(&manifest_path(&args.report, &args.manifest))?;

    println!(
        "eval: n {} mean_cos {:.4} top1 {:.4} mean_rank {:.2}",
        summary.n, summary.mean_cos, summary.top1, summary.mean_rank
    );
    Ok(ExitCode::SUCCESS)
}
