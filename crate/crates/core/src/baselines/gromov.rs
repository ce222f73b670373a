//! Entropic Gromov-Wasserstein with squared distortion.
//!
//! Outer loop linearizes the quadratic objective around the current plan and
//! solves the linearized problem with Sinkhorn; iterates until the plan stops
//! moving. Distance matrices are rescaled to max 1 before solving.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::sinkhorn::sinkhorn;
use super::TransportPlan;

pub struct GwOptions {
    pub epsilon: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub inner_iters: usize,
    pub inner_tol: f64,
}

impl Default for GwOptions {
    fn default() -> Self {
        GwOptions {
            epsilon: 0.05,
            max_iters: 200,
            tol: 1e-7,
            inner_iters: 2000,
            inner_tol: 1e-6,
        }
    }
}

fn check_distance_matrix(name: &'static str, d: &Matrix) -> Result<()> {
    let (n, m) = d.shape();
    if n == 0 || n != m {
        return Err(Error::dim(name, "square nonempty", format!("{n}x{m}")));
    }
    d.check_finite(name)?;
    for i in 0..n {
        for j in 0..i {
            if (d.get(i, j) - d.get(j, i)).abs() > 1e-9 {
                return Err(Error::Domain(format!("{name} is not symmetric")));
            }
        }
        if d.row(i).iter().any(|&v| v < 0.0) {
            return Err(Error::Domain(format!("{name} has negative entries")));
        }
    }
    Ok(())
}

fn rescaled(d: &Matrix) -> Matrix {
    let max = d.max_abs();
    if max > 0.0 {
        d.scale(1.0 / max)
    } else {
        d.clone()
    }
}

/// Entropic GW between uniform marginals over two metric spaces given their
/// intra-space distance matrices.
pub fn gromov_wasserstein(
    d_src: &Matrix,
    d_tgt: &Matrix,
    epsilon: f64,
    max_iters: usize,
    tol: f64,
) -> Result<TransportPlan> {
    gromov_wasserstein_with(
        d_src,
        d_tgt,
        &GwOptions {
            epsilon,
            max_iters,
            tol,
            ..GwOptions::default()
        },
    )
}

pub fn gromov_wasserstein_with(
    d_src: &Matrix,
    d_tgt: &Matrix,
    opts: &GwOptions,
) -> Result<TransportPlan> {
    check_distance_matrix("gromov_wasserstein d_src", d_src)?;
    check_distance_matrix("gromov_wasserstein d_tgt", d_tgt)?;
    if !(opts.epsilon > 0.0) {
        return Err(Error::Domain(format!(
            "epsilon must be > 0, got {}",
            opts.epsilon
        )));
    }
    let c1 = rescaled(d_src);
    let c2 = rescaled(d_tgt);
    let n = c1.rows();
    let m = c2.rows();
    let p = 1.0 / n as f64;
    let q = 1.0 / m as f64;

    // Squared-loss decomposition: the cost tensor contraction is
    // f1(C1)p·1ᵀ + 1·qᵀf2(C2) − 2·C1·P·C2 with f1 = f2 = (·)².
    let c1_sq_row: Vec<f64> = (0..n)
        .map(|i| c1.row(i).iter().map(|&v| v * v).sum::<f64>() * p)
        .collect();
    let c2_sq_row: Vec<f64> = (0..m)
        .map(|j| c2.row(j).iter().map(|&v| v * v).sum::<f64>() * q)
        .collect();

    let pseudo_cost = |plan: &Matrix| -> Matrix {
        let cross = c1.matmul(plan).matmul(&c2); // C2 symmetric
        let mut g = Matrix::zeros(n, m);
        for i in 0..n {
            let row = g.row_mut(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = c1_sq_row[i] + c2_sq_row[j] - 2.0 * cross.get(i, j);
            }
        }
        g
    };

    let mut plan = Matrix::zeros(n, m);
    plan.fill(p * q);
    let mut converged = false;
    let mut iterations = 0;
    let mut inner_violation = f64::INFINITY;
    for _ in 0..opts.max_iters {
        let g = pseudo_cost(&plan);
        let inner = sinkhorn(&g, opts.epsilon, opts.inner_iters, opts.inner_tol)?;
        iterations += 1;
        inner_violation = inner.marginal_violation;
        let change = inner
            .plan
            .data()
            .iter()
            .zip(plan.data())
            .fold(0.0f64, |worst, (&a, &b)| worst.max((a - b).abs()));
        plan = inner.plan;
        if change < opts.tol {
            converged = true;
            break;
        }
    }

    let g = pseudo_cost(&plan);
    let objective = g
        .data()
        .iter()
        .zip(plan.data())
        .map(|(&gv, &pv)| gv * pv)
        .sum();
    Ok(TransportPlan {
        plan,
        row_marginal: vec![p; n],
        col_marginal: vec![q; m],
        converged,
        marginal_violation: inner_violation,
        iterations,
        objective,
    })
}

/// GW distortion of an explicit permutation matching, on rescaled matrices
/// with uniform point masses.
pub fn gw_permutation_objective(d_src: &Matrix, d_tgt: &Matrix, perm: &[usize]) -> f64 {
    let c1 = rescaled(d_src);
    let c2 = rescaled(d_tgt);
    let n = c1.rows();
    let w = 1.0 / (n * n) as f64;
    let mut total = 0.0;
    for i in 0..n {
        for k in 0..n {
            let diff = c1.get(i, k) - c2.get(perm[i], perm[k]);
            total += diff * diff * w;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{ot_top1, pairwise_distances};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn random_cloud(n: usize, d: usize, rng: &mut ChaCha12Rng) -> Matrix {
        let mut m = Matrix::zeros(n, d);
        for v in m.data_mut() {
            *v = rng.sample(StandardNormal);
        }
        m
    }

    #[test]
    fn identical_spaces_match_brute_force_objective() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let cloud = random_cloud(8, 4, &mut rng);
        let d = pairwise_distances(&cloud);
        let plan = gromov_wasserstein(&d, &d, 0.02, 300, 1e-8).unwrap();
        // Row-argmax matching of the plan.
        let perm: Vec<usize> = (0..8)
            .map(|i| {
                let row = plan.plan.row(i);
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0
            })
            .collect();
        let got = gw_permutation_objective(&d, &d, &perm);

        // Brute force over all 8! permutations.
        let mut best = f64::INFINITY;
        let mut p: Vec<usize> = (0..8).collect();
        permute(&mut p, 0, &mut |perm| {
            let obj = gw_permutation_objective(&d, &d, perm);
            if obj < best {
                best = obj;
            }
        });
        assert!(got - best < 1e-3, "got {got}, brute force {best}");
    }

    fn permute(perm: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == perm.len() {
            f(perm);
            return;
        }
        for i in k..perm.len() {
            perm.swap(k, i);
            permute(perm, k + 1, f);
            perm.swap(k, i);
        }
    }

    #[test]
    fn recovers_matching_under_rigid_rotation() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let n = 50;
        let cloud = random_cloud(n, 8, &mut rng);
        // A rotation preserves pairwise distances exactly, so the target
        // distance matrix equals the source one.
        let d = pairwise_distances(&cloud);
        let plan = gromov_wasserstein(&d, &d, 0.002, 300, 1e-9).unwrap();
        let top1 = ot_top1(&plan).unwrap();
        assert!(top1 >= 0.95, "GW isometry top-1 {top1}");
        assert!(plan.marginal_violation < 1e-6);
    }

    #[test]
    fn relabeling_invariance() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let n = 12;
        let a = random_cloud(n, 5, &mut rng);
        let b = random_cloud(n, 5, &mut rng);
        let d_src = pairwise_distances(&a);
        let d_tgt = pairwise_distances(&b);
        let base = gromov_wasserstein(&d_src, &d_tgt, 0.05, 100, 1e-8).unwrap();

        // Permute the source space, solve, undo the permutation.
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        let mut d_perm = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                d_perm.set(i, j, d_src.get(perm[i], perm[j]));
            }
        }
        let shuffled = gromov_wasserstein(&d_perm, &d_tgt, 0.05, 100, 1e-8).unwrap();
        assert!(
            (base.objective - shuffled.objective).abs() < 1e-8,
            "{} vs {}",
            base.objective,
            shuffled.objective
        );
    }

    #[test]
    fn marginals_are_uniform() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let a = random_cloud(10, 4, &mut rng);
        let b = random_cloud(10, 4, &mut rng);
        let plan = gromov_wasserstein(
            &pairwise_distances(&a),
            &pairwise_distances(&b),
            0.05,
            200,
            1e-8,
        )
        .unwrap();
        for i in 0..10 {
            let sum: f64 = plan.plan.row(i).iter().sum();
            assert!((sum - 0.1).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_asymmetric_input() {
        let mut d = Matrix::zeros(3, 3);
        d.set(0, 1, 1.0);
        assert!(gromov_wasserstein(&d, &d, 0.05, 10, 1e-6).is_err());
    }
}
