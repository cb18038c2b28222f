//! Minimum-cost rectangular assignment.
//!
//! Shortest-augmenting-path Hungarian method with row/column potentials,
//! O(n^2 m) for an `n x m` matrix with `n <= m` (the matrix is transposed
//! internally otherwise). Every argmin scan takes the lowest index among
//! equal candidates, so results are deterministic for a given matrix.

use serde::Serialize;

use crate::error::{Error, Result};

/// Dense row-major cost matrix (rows are predictions, columns ground truth).
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::validation(format!(
                "cost matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "cost entry ({}, {}) is not finite",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::validation("cost matrix rows differ in length"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    fn transposed(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.get(r, c));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assignment {
    /// `(prediction, ground truth)` pairs, ascending by prediction index.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_predictions: Vec<usize>,
    pub unmatched_ground_truth: Vec<usize>,
    pub total_cost: f64,
}

/// Column assigned to each row, for `rows <= cols`.
fn solve_wide(costs: &CostMatrix) -> Vec<usize> {
    let (n, m) = (costs.rows, costs.cols);
    // 1-based indexing with slot 0 as the virtual root column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = costs.get(r0 - 1, j - 1) - u[r0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = col0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    col1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }

    let mut assigned = vec![usize::MAX; n];
    for j in 1..=m {
        if owner[j] != 0 {
            assigned[owner[j] - 1] = j - 1;
        }
    }
    assigned
}

/// Minimum-cost matching of size `min(rows, cols)`.
pub fn hungarian(costs: &CostMatrix) -> Assignment {
    let (rows, cols) = (costs.rows, costs.cols);
    let mut pairs: Vec<(usize, usize)> = if rows == 0 || cols == 0 {
        Vec::new()
    } else if rows <= cols {
        solve_wide(costs).into_iter().enumerate().collect()
    } else {
        solve_wide(&costs.transposed())
            .into_iter()
            .enumerate()
            .map(|(c, r)| (r, c))
            .collect()
    };
    pairs.sort_unstable();

    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    let mut total_cost = 0.0;
    for &(r, c) in &pairs {
        row_used[r] = true;
        col_used[c] = true;
        total_cost += costs.get(r, c);
    }
    Assignment {
        pairs,
        unmatched_predictions: (0..rows).filter(|&r| !row_used[r]).collect(),
        unmatched_ground_truth: (0..cols).filter(|&c| !col_used[c]).collect(),
        total_cost,
    }
}
