use std::collections::HashMap;

use crate::error::Result;

use super::solver::{weighted_coordinate_descent, Solution};
use super::sparse::SparseMatrix;

/// A weight matrix with identical columns merged and empty columns removed.
///
/// Identical columns receive equal values at the Elastic Net optimum, so a
/// group of `g` copies of column `w` is solved as one coordinate with
/// column `g w` and penalty factor `g`. Every member takes the group value.
#[derive(Debug, Clone)]
pub struct ReducedProblem {
    pub matrix: SparseMatrix,
    pub penalty: Vec<f64>,
    /// Original column indices of each group.
    pub groups: Vec<Vec<usize>>,
    pub original_cols: usize,
}

impl ReducedProblem {
    pub fn new(w: &SparseMatrix) -> Self {
        let mut index: HashMap<(Vec<usize>, Vec<u64>), usize> = HashMap::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for c in 0..w.ncols() {
            let (rows, vals) = w.column(c);
            if rows.is_empty() {
                continue;
            }
            let key = (rows.to_vec(), vals.iter().map(|v| v.to_bits()).collect());
            let g = *index.entry(key).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(c);
        }
        let mut triplets = Vec::new();
        let mut penalty = Vec::with_capacity(groups.len());
        for (g, members) in groups.iter().enumerate() {
            let size = members.len() as f64;
            let (rows, vals) = w.column(members[0]);
            triplets.extend(rows.iter().zip(vals).map(|(&r, &v)| (r, g, v * size)));
            penalty.push(size);
        }
        let matrix = SparseMatrix::from_triplets(w.nrows(), groups.len(), &triplets)
            .expect("reduced triplets stay in range");
        Self { matrix, penalty, groups, original_cols: w.ncols() }
    }

    pub fn expand(&self, t: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.original_cols];
        for (members, &v) in self.groups.iter().zip(t) {
            for &c in members {
                x[c] = v;
            }
        }
        x
    }

    /// Solves in the reduced space; `t0` is a reduced warm start.
    pub fn solve(
        &self,
        y: &[f64],
        lambda: f64,
        alpha: f64,
        max_iterations: usize,
        tolerance: f64,
        t0: Option<&[f64]>,
    ) -> Result<Solution> {
        weighted_coordinate_descent(&self.matrix, y, lambda, alpha, Some(&self.penalty), max_iterations, tolerance, t0)
    }
}
