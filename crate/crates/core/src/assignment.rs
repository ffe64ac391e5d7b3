//! Minimum-cost one-to-one assignment on rectangular cost matrices.
//!
//! Every result maps each row to at most one column; exactly
//! `min(rows, cols)` pairs are assigned.

use crate::matrix::Matrix;

/// Largest side for which [`min_cost_assignment`] enumerates exhaustively.
pub const EXHAUSTIVE_LIMIT: usize = 8;

/// Row → column assignment minimizing the summed cost. Enumerates when both
/// sides are at most [`EXHAUSTIVE_LIMIT`], otherwise runs the Hungarian method.
pub fn min_cost_assignment(cost: &Matrix) -> Vec<Option<usize>> {
    if cost.rows() <= EXHAUSTIVE_LIMIT && cost.cols() <= EXHAUSTIVE_LIMIT {
        exhaustive(cost)
    } else {
        hungarian(cost)
    }
}

pub fn assignment_cost(cost: &Matrix, assignment: &[Option<usize>]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| cost[(r, c)]))
        .sum()
}

fn invert(assign_t: Vec<Option<usize>>, rows: usize) -> Vec<Option<usize>> {
    let mut out = vec![None; rows];
    for (c, r) in assign_t.into_iter().enumerate() {
        if let Some(r) = r {
            out[r] = Some(c);
        }
    }
    out
}

/// Depth-first enumeration of all injections from the smaller side into the
/// larger one. First minimum in lexicographic order wins.
pub fn exhaustive(cost: &Matrix) -> Vec<Option<usize>> {
    if cost.rows() > cost.cols() {
        return invert(exhaustive(&cost.transpose()), cost.rows());
    }
    struct Search<'a> {
        cost: &'a Matrix,
        used: Vec<bool>,
        current: Vec<usize>,
        best: Option<(f64, Vec<usize>)>,
    }
    impl Search<'_> {
        fn go(&mut self, row: usize, acc: f64) {
            if row == self.cost.rows() {
                if self.best.as_ref().is_none_or(|(b, _)| acc < *b) {
                    self.best = Some((acc, self.current.clone()));
                }
                return;
            }
            for c in 0..self.cost.cols() {
                if !self.used[c] {
                    self.used[c] = true;
                    self.current.push(c);
                    self.go(row + 1, acc + self.cost[(row, c)]);
                    self.current.pop();
                    self.used[c] = false;
                }
            }
        }
    }
    let mut s = Search {
        cost,
        used: vec![false; cost.cols()],
        current: Vec::with_capacity(cost.rows()),
        best: None,
    };
    s.go(0, 0.0);
    s.best
        .map(|(_, cols)| cols.into_iter().map(Some).collect())
        .unwrap_or_else(|| vec![None; cost.rows()])
}

/// Hungarian method with row/column potentials, O(n²m) for n ≤ m.
pub fn hungarian(cost: &Matrix) -> Vec<Option<usize>> {
    let (n, m) = (cost.rows(), cost.cols());
    if n > m {
        return invert(hungarian(&cost.transpose()), n);
    }
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; index 0 is the virtual root column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
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
            for j in 0..=m {
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
    let mut out = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}
