//! Linear assignment by the Hungarian method (shortest augmenting paths with potentials).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Maximizes `Σ_i score[(i, assign[i])]` over bijections. Rows are inserted in
/// index order and columns scanned in index order with strict comparisons, so
/// among tied candidates the lowest index is kept; an all-equal score matrix
/// yields the identity.
pub fn max_weight_assignment(score: &DMatrix<f64>) -> Result<Vec<usize>> {
    let n = score.nrows();
    if score.ncols() != n {
        return Err(Error::invalid("assignment needs a square score matrix"));
    }
    if score.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("assignment scores must be finite"));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    // 1-based arrays with a virtual column 0, cost = -score.
    let cost = |i: usize, j: usize| -score[(i - 1, j - 1)];
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    Ok(assign)
}
