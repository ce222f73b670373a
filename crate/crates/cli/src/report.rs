//! Stable CSV schemas. Columns never reorder.

use std::io::Write;
use std::path::Path;

use v2v_core::{Error, EvalReport, LossBreakdown, Result};

pub const REPORT_HEADER: &str =
    "pair,method,dataset,mean_cos,stderr_cos,top1,mean_rank,stderr_rank,n,flag";

/// One row of the shared report schema. Metrics that do not apply stay empty.
#[derive(Clone)]
pub struct ReportRow {
    pub pair: String,
    pub method: String,
    pub dataset: String,
    pub mean_cos: Option<f64>,
    pub stderr_cos: Option<f64>,
    pub top1: Option<f64>,
    pub mean_rank: Option<f64>,
    pub stderr_rank: Option<f64>,
    pub n: Option<usize>,
    pub flag: String,
}

impl ReportRow {
    pub fn from_eval(pair: &str, method: &str, dataset: &str, r: &EvalReport, flag: &str) -> Self {
        ReportRow {
            pair: pair.to_string(),
            method: method.to_string(),
            dataset: dataset.to_string(),
            mean_cos: Some(r.mean_cos),
            stderr_cos: Some(r.stderr_cos),
            top1: Some(r.top1),
            mean_rank: Some(r.mean_rank),
            stderr_rank: Some(r.stderr_rank),
            n: Some(r.n),
            flag: flag.to_string(),
        }
    }

    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.pair,
            self.method,
            self.dataset,
            f(self.mean_cos),
            f(self.stderr_cos),
            f(self.top1),
            f(self.mean_rank),
            f(self.stderr_rank),
            self.n.map(|n| n.to_string()).unwrap_or_default(),
            self.flag
        )
    }
}

/// Append rows, writing the header when the file is new or empty.
pub fn append_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let need_header = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path.to_path_buf(), e))?;
    let mut out = String::new();
    if need_header {
        out.push_str(REPORT_HEADER);
        out.push('\n');
    }
    for row in rows {
        out.push_str(&row.to_csv());
        out.push('\n');
    }
    file.write_all(out.as_bytes())
        .map_err(|e| Error::io(path.to_path_buf(), e))?;
    Ok(())
}

pub const HISTORY_HEADER: &str =
    "step,adv_total,gan_emb_1,gan_emb_2,gan_lat_1,gan_lat_2,rec,cc,vsp,gen_total,objective";

pub fn write_history(path: &Path, history: &[LossBreakdown]) -> Result<()> {
    let mut out = String::with_capacity(64 * (history.len() + 1));
    out.push_str(HISTORY_HEADER);
    out.push('\n');
    for (step, row) in history.iter().enumerate() {
        out.push_str(&step.to_string());
        for v in row.fields() {
            out.push(',');
            out.push_str(&format!("{v:.6}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.to_path_buf(), e))
}
