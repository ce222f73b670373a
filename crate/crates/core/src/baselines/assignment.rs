//! Exact minimum-cost assignment (Jonker-Volgenant style shortest augmenting
//! paths with dual potentials, O(n³)).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// A bijection row → column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub perm: Vec<usize>,
}

impl Assignment {
    pub fn objective(&self, cost: &Matrix) -> f64 {
        self.perm
            .iter()
            .enumerate()
            .map(|(i, &j)| cost.get(i, j))
            .sum()
    }
}

/// Permutation minimizing Σ cost[i, π(i)] exactly.
pub fn hungarian(cost: &Matrix) -> Result<Assignment> {
    let n = cost.rows();
    if n == 0 || cost.cols() != n {
        return Err(Error::dim(
            "hungarian",
            format!("square nonempty, got {}x{}", cost.rows(), cost.cols()),
            "",
        ));
    }
    cost.check_finite("hungarian cost")?;

    // 1-indexed arrays with a virtual column 0.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // row matched to each column
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        // Augment along the recorded path.
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[matched_row[j] - 1] = j - 1;
    }
    Ok(Assignment { perm })
}
