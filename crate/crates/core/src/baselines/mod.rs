//! Matching and optimal-transport baselines: the naïve identity baseline plus
//! Hungarian / EMD / Sinkhorn / Gromov-Wasserstein solvers over uniform
//! marginals, with plan-level retrieval metrics and barycentric projection.

mod assignment;
mod gromov;
mod sinkhorn;

pub use assignment::{hungarian, Assignment};
pub use gromov::{gromov_wasserstein, gromov_wasserstein_with, gw_permutation_objective, GwOptions};
pub use sinkhorn::sinkhorn;

use crate::error::{Error, Result};
use crate::evaluation::cosine;
use crate::numerics::Matrix;

/// An n×m nonnegative coupling between two uniform point clouds.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub plan: Matrix,
    pub row_marginal: Vec<f64>,
    pub col_marginal: Vec<f64>,
    pub converged: bool,
    pub marginal_violation: f64,
    pub iterations: usize,
    /// Transport cost ⟨C, P⟩ (Sinkhorn/EMD) or GW distortion.
    pub objective: f64,
}

impl TransportPlan {
    pub fn shape(&self) -> (usize, usize) {
        self.plan.shape()
    }

    pub fn total_mass(&self) -> f64 {
        self.plan.data().iter().sum()
    }
}

/// The do-nothing baseline F(x) = x. Only defined when the two spaces share a
/// dimension; cross-dimension pairs have no naïve baseline.
pub fn naive_translate(u: &Matrix, target_dim: usize) -> Result<Matrix> {
    if u.cols() != target_dim {
        return Err(Error::dim("naive_translate", target_dim, u.cols()));
    }
    Ok(u.clone())
}

/// Cosine-distance cost matrix cost[i][j] = 1 − cos(u_i, v_j).
pub fn cosine_cost(u: &Matrix, v: &Matrix) -> Result<Matrix> {
    if u.cols() != v.cols() {
        return Err(Error::dim("cosine_cost", u.cols(), v.cols()));
    }
    let mut cost = Matrix::zeros(u.rows(), v.rows());
    for i in 0..u.rows() {
        let row = cost.row_mut(i);
        for (j, c) in row.iter_mut().enumerate() {
            *c = 1.0 - cosine(u.row(i), v.row(j))?;
        }
    }
    Ok(cost)
}

/// Euclidean intra-space distance matrix.
pub fn pairwise_distances(points: &Matrix) -> Matrix {
    let n = points.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dist = points
                .row(i)
                .iter()
                .zip(points.row(j))
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d.set(i, j, dist);
            d.set(j, i, dist);
        }
    }
    d
}

/// Exact OT with uniform equal marginals: an optimal vertex of the transport
/// polytope is a permutation matrix scaled by 1/n, obtained from the exact
/// assignment solver.
pub fn emd(cost: &Matrix) -> Result<TransportPlan> {
    let n = cost.rows();
    if cost.cols() != n || n == 0 {
        return Err(Error::dim(
            "emd",
            format!("square nonempty, got {}x{}", cost.rows(), cost.cols()),
            "",
        ));
    }
    let assignment = hungarian(cost)?;
    let mut plan = Matrix::zeros(n, n);
    for (i, &j) in assignment.perm.iter().enumerate() {
        plan.set(i, j, 1.0 / n as f64);
    }
    Ok(TransportPlan {
        plan,
        row_marginal: vec![1.0 / n as f64; n],
        col_marginal: vec![1.0 / n as f64; n],
        converged: true,
        marginal_violation: 0.0,
        iterations: 1,
        objective: assignment.objective(cost) / n as f64,
    })
}

/// Row-normalized weighted average of the targets: v'_i = Σ_j P_ij·t_j / Σ_j P_ij.
pub fn barycentric_project(plan: &TransportPlan, targets: &Matrix) -> Result<Matrix> {
    let (n, m) = plan.shape();
    if targets.rows() != m {
        return Err(Error::dim("barycentric_project", m, targets.rows()));
    }
    let mut out = plan.plan.matmul(targets);
    for i in 0..n {
        let mass: f64 = plan.plan.row(i).iter().sum();
        if mass <= 0.0 {
            return Err(Error::Domain(format!(
                "barycentric_project: plan row {i} has zero mass"
            )));
        }
        for v in out.row_mut(i) {
            *v /= mass;
        }
    }
    Ok(out)
}

fn require_square(plan: &TransportPlan, context: &'static str) -> Result<usize> {
    let (n, m) = plan.shape();
    if n != m || n == 0 {
        return Err(Error::dim(context, "square nonempty plan", format!("{n}x{m}")));
    }
    Ok(n)
}

/// Top-1 accuracy of a plan against the identity pairing: the better of
/// per-row argmax mass and the exact max-mass assignment.
pub fn ot_top1(plan: &TransportPlan) -> Result<f64> {
    let n = require_square(plan, "ot_top1")?;
    let argmax_hits = (0..n)
        .filter(|&i| {
            let row = plan.plan.row(i);
            let mut best = 0usize;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best == i
        })
        .count();
    let neg = plan.plan.scale(-1.0);
    let assignment = hungarian(&neg)?;
    let hungarian_hits = assignment.perm.iter().enumerate().filter(|&(i, &j)| i == j).count();
    Ok(argmax_hits.max(hungarian_hits) as f64 / n as f64)
}

/// 1-based rank of the true target i among row i's masses, sorted descending
/// with ties broken by ascending column index.
pub fn ot_rank_list(plan: &TransportPlan) -> Result<Vec<usize>> {
    let n = require_square(plan, "ot_rank")?;
    let mut ranks = Vec::with_capacity(n);
    for i in 0..n {
        let row = plan.plan.row(i);
        let mine = row[i];
        let mut rank = 1usize;
        for (j, &v) in row.iter().enumerate() {
            if v > mine || (v == mine && j < i) {
                rank += 1;
            }
        }
        ranks.push(rank);
    }
    Ok(ranks)
}

/// Mean rank of the identity pairing under the plan.
pub fn ot_rank(plan: &TransportPlan) -> Result<f64> {
    let ranks = ot_rank_list(plan)?;
    Ok(ranks.iter().map(|&r| r as f64).sum::<f64>() / ranks.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn plan_from(matrix: Matrix) -> TransportPlan {
        let (n, m) = matrix.shape();
        TransportPlan {
            plan: matrix,
            row_marginal: vec![1.0 / n as f64; n],
            col_marginal: vec![1.0 / m as f64; m],
            converged: true,
            marginal_violation: 0.0,
            iterations: 0,
            objective: 0.0,
        }
    }

    #[test]
    fn naive_is_identity_or_error() {
        let u = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert_eq!(naive_translate(&u, 2).unwrap().data(), u.data());
        assert!(naive_translate(&u, 3).is_err());
    }

    #[test]
    fn emd_matches_hungarian_on_random_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..100 {
            let mut cost = Matrix::zeros(6, 6);
            for v in cost.data_mut() {
                *v = rng.random_range(0.0..1.0);
            }
            let plan = emd(&cost).unwrap();
            let assignment = hungarian(&cost).unwrap();
            assert!((plan.objective - assignment.objective(&cost) / 6.0).abs() < 1e-12);
            assert!((plan.total_mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn emd_identity_cost() {
        let mut cost = Matrix::zeros(4, 4);
        cost.fill(1.0);
        for i in 0..4 {
            cost.set(i, i, 0.0);
        }
        let plan = emd(&cost).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 0.25 } else { 0.0 };
                assert_eq!(plan.plan.get(i, j), want);
            }
        }
    }

    #[test]
    fn barycentric_examples() {
        let targets = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();

        // Scaled identity plan reproduces the targets.
        let mut ident = Matrix::zeros(2, 2);
        ident.set(0, 0, 0.5);
        ident.set(1, 1, 0.5);
        let out = barycentric_project(&plan_from(ident), &targets).unwrap();
        assert_eq!(out.data(), targets.data());

        // Uniform plan averages the targets.
        let mut uniform = Matrix::zeros(2, 2);
        uniform.fill(0.25);
        let out = barycentric_project(&plan_from(uniform), &targets).unwrap();
        for &v in out.data() {
            assert!((v - 0.5).abs() < 1e-12);
        }

        // Mixed weights.
        let p = Matrix::from_rows(&[vec![0.375, 0.125], vec![0.125, 0.375]]).unwrap();
        let out = barycentric_project(&plan_from(p), &targets).unwrap();
        assert!((out.get(0, 0) - 0.75).abs() < 1e-12);
        assert!((out.get(0, 1) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn barycentric_outputs_stay_in_convex_hull() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let mut targets = Matrix::zeros(5, 3);
        for v in targets.data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let mut raw = Matrix::zeros(4, 5);
        for v in raw.data_mut() {
            *v = rng.random_range(0.0..1.0);
        }
        let out = barycentric_project(&plan_from(raw), &targets).unwrap();
        // Componentwise bounds of a convex combination.
        for j in 0..3 {
            let lo = (0..5).map(|i| targets.get(i, j)).fold(f64::INFINITY, f64::min);
            let hi = (0..5).map(|i| targets.get(i, j)).fold(f64::NEG_INFINITY, f64::max);
            for i in 0..4 {
                assert!(out.get(i, j) >= lo - 1e-12 && out.get(i, j) <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn zero_mass_row_is_domain_error() {
        let p = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let targets = Matrix::zeros(2, 2);
        assert!(barycentric_project(&plan_from(p), &targets).is_err());
    }

    #[test]
    fn plan_metrics_on_scaled_identity() {
        let mut ident = Matrix::zeros(4, 4);
        for i in 0..4 {
            ident.set(i, i, 0.25);
        }
        let plan = plan_from(ident);
        assert_eq!(ot_top1(&plan).unwrap(), 1.0);
        assert_eq!(ot_rank(&plan).unwrap(), 1.0);
    }

    #[test]
    fn uniform_plan_rank_follows_tie_rule() {
        let mut uniform = Matrix::zeros(4, 4);
        uniform.fill(0.0625);
        let plan = plan_from(uniform);
        // All masses tie; ascending-index tie-break puts column i at 1-based
        // position i+1 in row i, so the mean rank is (1+2+3+4)/4.
        assert_eq!(ot_rank(&plan).unwrap(), 2.5);
    }

    #[test]
    fn reversal_plan_metrics_match_enumeration() {
        let n = 4;
        let mut rev = Matrix::zeros(n, n);
        for i in 0..n {
            rev.set(i, n - 1 - i, 1.0 / n as f64);
        }
        let plan = plan_from(rev);
        assert_eq!(ot_top1(&plan).unwrap(), 0.0);

        // Enumeration oracle: sort each row by (descending mass, ascending
        // index) and find the position of the true column.
        let mut expected = 0.0;
        for i in 0..n {
            let row = plan.plan.row(i);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b))
            });
            expected += (order.iter().position(|&j| j == i).unwrap() + 1) as f64;
        }
        expected /= n as f64;
        assert_eq!(ot_rank(&plan).unwrap(), expected);
        assert_eq!(expected, 3.0);
    }

    #[test]
    fn cosine_cost_rejects_dim_mismatch() {
        let u = Matrix::zeros(2, 3);
        let v = Matrix::zeros(2, 4);
        assert!(cosine_cost(&u, &v).is_err());
    }

    #[test]
    fn pairwise_distances_are_metric_like() {
        let pts = Matrix::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0], vec![0.0, 1.0]]).unwrap();
        let d = pairwise_distances(&pts);
        assert_eq!(d.get(0, 1), 5.0);
        assert_eq!(d.get(1, 0), 5.0);
        assert_eq!(d.get(0, 0), 0.0);
        assert_eq!(d.get(0, 2), 1.0);
    }
}
