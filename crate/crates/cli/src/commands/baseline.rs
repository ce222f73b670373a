use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, ValueEnum};
use rayon::prelude::*;

use v2v_core::baselines::{
    barycentric_project, cosine_cost, emd, gromov_wasserstein, hungarian, ot_rank_list, ot_top1,
    pairwise_distances, sinkhorn, TransportPlan,
};
use v2v_core::data::load;
use v2v_core::evaluation::{cosine, eval_translation};
use v2v_core::{Error, Matrix, Result};

use crate::commands::manifest_path;
use crate::manifest::ManifestBuilder;
use crate::report::{append_report, ReportRow};

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Solver {
    Naive,
    Hungarian,
    Emd,
    Sinkhorn,
    Gw,
    All,
}

#[derive(Args)]
pub struct BaselineArgs {
    /// Space-1 embeddings; row i pairs with row i of the space-2 file.
    #[arg(long)]
    pub input_u: PathBuf,
    #[arg(long)]
    pub input_v: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub solver: Solver,
    /// Sinkhorn entropic regularization on the cosine cost.
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    /// Gromov-Wasserstein entropic regularization.
    #[arg(long, default_value_t = 0.005)]
    pub gw_epsilon: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long)]
    pub report: PathBuf,
    /// Per-solver convergence diagnostics CSV.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    #[arg(long, default_value = "unnamed")]
    pub pair: String,
    #[arg(long, default_value = "unnamed")]
    pub dataset: String,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

struct SolverResult {
    row: ReportRow,
    diag: Option<String>,
    mean_rank: Option<f64>,
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Plan quality against the identity pairing: barycentric cosine, top-1,
/// mean rank.
fn plan_row(
    args: &BaselineArgs,
    name: &str,
    plan: &TransportPlan,
    targets: &Matrix,
) -> Result<SolverResult> {
    let projected = barycentric_project(plan, targets)?;
    let cos: Vec<f64> = (0..targets.rows())
        .map(|i| cosine(projected.row(i), targets.row(i)))
        .collect::<Result<_>>()?;
    let (mean_cos, stderr_cos) = mean_stderr(&cos);
    let ranks: Vec<f64> = ot_rank_list(plan)?.iter().map(|&r| r as f64).collect();
    let (mean_rank, stderr_rank) = mean_stderr(&ranks);
    let top1 = ot_top1(plan)?;
    Ok(SolverResult {
        row: ReportRow {
            pair: args.pair.clone(),
            method: name.to_string(),
            dataset: args.dataset.clone(),
            mean_cos: Some(mean_cos),
            stderr_cos: Some(stderr_cos),
            top1: Some(top1),
            mean_rank: Some(mean_rank),
            stderr_rank: Some(stderr_rank),
            n: Some(targets.rows()),
            flag: String::new(),
        },
        diag: Some(format!(
            "{name},{},{},{:.9},{:.9}",
            plan.converged, plan.iterations, plan.marginal_violation, plan.objective
        )),
        mean_rank: Some(mean_rank),
    })
}

fn not_applicable(args: &BaselineArgs, name: &str) -> SolverResult {
    SolverResult {
        row: ReportRow {
            pair: args.pair.clone(),
            method: name.to_string(),
            dataset: args.dataset.clone(),
            mean_cos: None,
            stderr_cos: None,
            top1: None,
            mean_rank: None,
            stderr_rank: None,
            n: None,
            flag: "not_applicable".to_string(),
        },
        diag: None,
        mean_rank: None,
    }
}

fn run_solver(
    args: &BaselineArgs,
    solver: Solver,
    u: &Matrix,
    v: &Matrix,
) -> Result<SolverResult> {
    let same_dim = u.cols() == v.cols();
    match solver {
        Solver::Naive => {
            if !same_dim {
                return Ok(not_applicable(args, "naive"));
            }
            let r = eval_translation(u, v, u.rows().max(2))?;
            Ok(SolverResult {
                mean_rank: Some(r.mean_rank),
                row: ReportRow::from_eval(&args.pair, "naive", &args.dataset, &r, ""),
                diag: None,
            })
        }
        Solver::Hungarian => {
            if !same_dim {
                return Ok(not_applicable(args, "hungarian"));
            }
            // A discrete matching has a top-1 accuracy but no rank metric.
            let cost = cosine_cost(u, v)?;
            let assignment = hungarian(&cost)?;
            let hits = assignment
                .perm
                .iter()
                .enumerate()
                .filter(|&(i, &j)| i == j)
                .count();
            Ok(SolverResult {
                row: ReportRow {
                    pair: args.pair.clone(),
                    method: "hungarian".to_string(),
                    dataset: args.dataset.clone(),
                    mean_cos: None,
                    stderr_cos: None,
                    top1: Some(hits as f64 / u.rows() as f64),
                    mean_rank: None,
                    stderr_rank: None,
                    n: Some(u.rows()),
                    flag: String::new(),
                },
                diag: None,
                mean_rank: None,
            })
        }
        Solver::Emd => {
            if !same_dim {
                return Ok(not_applicable(args, "emd"));
            }
            let plan = emd(&cosine_cost(u, v)?)?;
            plan_row(args, "emd", &plan, v)
        }
        Solver::Sinkhorn => {
            if !same_dim {
                return Ok(not_applicable(args, "sinkhorn"));
            }
            let plan = sinkhorn(&cosine_cost(u, v)?, args.epsilon, args.max_iters, args.tol)?;
            plan_row(args, "sinkhorn", &plan, v)
        }
        Solver::Gw => {
            let d_src = pairwise_distances(u);
            let d_tgt = pairwise_distances(v);
            let plan = gromov_wasserstein(&d_src, &d_tgt, args.gw_epsilon, 200, args.tol)?;
            plan_row(args, "gw", &plan, v)
        }
        Solver::All => unreachable!("expanded by the caller"),
    }
}

pub fn run(args: BaselineArgs) -> Result<ExitCode> {
    let set_u = load(&args.input_u)?;
    let set_v = load(&args.input_v)?;
    if set_u.len() != set_v.len() {
        return Err(Error::dim("baseline row counts", set_v.len(), set_u.len()));
    }
    if set_u.len() < 2 {
        return Err(Error::Domain("baseline needs at least 2 rows".into()));
    }
    let u = set_u.normalize_rows().0.vectors;
    let v = set_v.normalize_rows().0.vectors;

    let solvers: Vec<Solver> = match args.solver {
        Solver::All => vec![
            Solver::Naive,
            Solver::Hungarian,
            Solver::Emd,
            Solver::Sinkhorn,
            Solver::Gw,
        ],
        s => vec![s],
    };
    let mut results: Vec<SolverResult> = solvers
        .par_iter()
        .map(|&s| run_solver(&args, s, &u, &v))
        .collect::<Result<_>>()?;

    // Mark the lowest-rank transport solver when several ran.
    if results.iter().filter(|r| r.mean_rank.is_some()).count() > 1 {
        let best = results
            .iter()
            .enumerate()
            .filter(|(_, r)| r.mean_rank.is_some() && r.row.method != "naive")
            .min_by(|a, b| {
                a.1.mean_rank
                    .unwrap()
                    .partial_cmp(&b.1.mean_rank.unwrap())
                    .unwrap()
            })
            .map(|(i, _)| i);
        if let Some(i) = best {
            results[i].row.flag = "min_rank".to_string();
        }
    }

    let rows: Vec<ReportRow> = results.iter().map(|r| r.row.clone()).collect();
    append_report(&args.report, &rows)?;

    if let Some(diag_path) = &args.diagnostics {
        let mut out = String::from("solver,converged,iterations,marginal_violation,objective\n");
        for r in &results {
            if let Some(d) = &r.diag {
                out.push_str(d);
                out.push('\n');
            }
        }
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(diag_path)
            .map_err(|e| Error::io(diag_path.clone(), e))?;
        file.write_all(out.as_bytes())
            .map_err(|e| Error::io(diag_path.clone(), e))?;
    }

    let mut manifest = ManifestBuilder::new("baseline")
        .input(&args.input_u)
        .input(&args.input_v);
    manifest.output(&args.report);
    if let Some(d) = &args.diagnostics {
        manifest.output(d);
    }
    manifest.write(&manifest_path(&args.report, &args.manifest))?;

    for r in &results {
        println!("baseline {}: {}", r.row.method, r.row.to_csv());
    }
    Ok(ExitCode::SUCCESS)
}
