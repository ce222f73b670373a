//! Entropic optimal transport via log-domain Sinkhorn scaling.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::TransportPlan;

/// Log-sum-exp with max subtraction.
fn lse(values: impl Iterator<Item = f64>, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(values);
    let max = scratch.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    if !max.is_finite() {
        return max;
    }
    max + scratch.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Entropic-regularized transport plan between uniform marginals 1/n and 1/m.
///
/// Runs log-domain scaling iterations until the worst marginal violation
/// drops below `tol` or `max_iters` is reached; non-convergence is recorded
/// on the returned plan rather than treated as an error.
pub fn sinkhorn(cost: &Matrix, epsilon: f64, max_iters: usize, tol: f64) -> Result<TransportPlan> {
    let (n, m) = cost.shape();
    if n == 0 || m == 0 {
        return Err(Error::EmptyBatch("sinkhorn cost"));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Domain(format!("epsilon must be > 0, got {epsilon}")));
    }
    cost.check_finite("sinkhorn cost")?;

    let log_a = -(n as f64).ln();
    let log_b = -(m as f64).ln();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut scratch = Vec::new();

    let plan_of = |f: &[f64], g: &[f64]| -> Matrix {
        let mut p = Matrix::zeros(n, m);
        for i in 0..n {
            let row = p.row_mut(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = ((f[i] + g[j] - cost.get(i, j)) / epsilon).exp();
            }
        }
        p
    };

    let violation_of = |p: &Matrix| -> f64 {
        let mut worst = 0.0f64;
        for i in 0..n {
            let sum: f64 = p.row(i).iter().sum();
            worst = worst.max((sum - 1.0 / n as f64).abs());
        }
        for j in 0..m {
            let mut sum = 0.0;
            for i in 0..n {
                sum += p.get(i, j);
            }
            worst = worst.max((sum - 1.0 / m as f64).abs());
        }
        worst
    };

    let mut iterations = 0;
    let mut converged = false;
    let mut violation = f64::INFINITY;
    while iterations < max_iters {
        for (i, fi) in f.iter_mut().enumerate() {
            let row_lse = lse(
                (0..m).map(|j| (g[j] - cost.get(i, j)) / epsilon),
                &mut scratch,
            );
            *fi = epsilon * (log_a - row_lse);
        }
        for (j, gj) in g.iter_mut().enumerate() {
            let col_lse = lse(
                (0..n).map(|i| (f[i] - cost.get(i, j)) / epsilon),
                &mut scratch,
            );
            *gj = epsilon * (log_b - col_lse);
        }
        iterations += 1;
        let p = plan_of(&f, &g);
        violation = violation_of(&p);
        if violation < tol {
            converged = true;
            break;
        }
    }

    let plan = plan_of(&f, &g);
    let objective = plan
        .data()
        .iter()
        .zip(cost.data())
        .map(|(&p, &c)| p * c)
        .sum();
    Ok(TransportPlan {
        row_marginal: vec![1.0 / n as f64; n],
        col_marginal: vec![1.0 / m as f64; m],
        plan,
        converged,
        marginal_violation: violation,
        iterations,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn constant_cost_gives_uniform_plan() {
        let mut cost = Matrix::zeros(3, 5);
        cost.fill(2.5);
        let plan = sinkhorn(&cost, 0.5, 500, 1e-9).unwrap();
        assert!(plan.converged);
        for &p in plan.plan.data() {
            assert!((p - 1.0 / 15.0).abs() < 1e-9);
        }
    }

    #[test]
    fn two_by_two_concentrates_on_diagonal() {
        let cost = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let plan = sinkhorn(&cost, 0.1, 1000, 1e-10).unwrap();
        // Fixed point is symmetric: off-diagonal mass a·e^{-1/ε} with
        // a + a·e^{-1/ε} = 1/2.
        let ratio = (-1.0 / 0.1_f64).exp();
        let a = 0.5 / (1.0 + ratio);
        let b = a * ratio;
        assert!((plan.plan.get(0, 0) - a).abs() < 1e-9);
        assert!((plan.plan.get(0, 1) - b).abs() < 1e-9);
        assert!(plan.plan.get(0, 1) < 1e-4);
    }

    #[test]
    fn marginals_within_tolerance_at_convergence() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..5 {
            let mut cost = Matrix::zeros(16, 16);
            for v in cost.data_mut() {
                *v = rng.random_range(0.0..1.0);
            }
            let plan = sinkhorn(&cost, 0.1, 5000, 1e-7).unwrap();
            assert!(plan.converged, "violation {}", plan.marginal_violation);
            assert!(plan.marginal_violation < 1e-6);
            let total: f64 = plan.plan.data().iter().sum();
            assert!((total - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn entropy_decreases_with_epsilon() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let mut cost = Matrix::zeros(12, 12);
        for v in cost.data_mut() {
            *v = rng.random_range(0.0..1.0);
        }
        let entropy = |p: &TransportPlan| -> f64 {
            p.plan
                .data()
                .iter()
                .filter(|&&v| v > 0.0)
                .map(|&v| -v * v.ln())
                .sum()
        };
        let e1 = entropy(&sinkhorn(&cost, 1.0, 5000, 1e-9).unwrap());
        let e2 = entropy(&sinkhorn(&cost, 0.1, 5000, 1e-9).unwrap());
        let e3 = entropy(&sinkhorn(&cost, 0.01, 20000, 1e-9).unwrap());
        assert!(e1 > e2, "{e1} vs {e2}");
        assert!(e2 > e3, "{e2} vs {e3}");
    }

    #[test]
    fn rejects_bad_epsilon() {
        let cost = Matrix::zeros(2, 2);
        assert!(sinkhorn(&cost, 0.0, 10, 1e-6).is_err());
        assert!(sinkhorn(&cost, -1.0, 10, 1e-6).is_err());
    }

    #[test]
    fn non_convergence_is_flagged() {
        // tol = 0 can never be met, so the flag records the final violation.
        let cost = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let plan = sinkhorn(&cost, 0.01, 3, 0.0).unwrap();
        assert!(!plan.converged);
        assert!(plan.marginal_violation.is_finite());
        assert_eq!(plan.iterations, 3);
    }
}
