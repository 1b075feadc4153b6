use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

use super::reduce::ReducedProblem;
use super::solver::{column_norms, ElasticNetConfig};
use super::sparse::SparseMatrix;

/// `||W^T y||_inf / max(alpha, 1e-3)`.
pub fn lambda_max(w: &SparseMatrix, y: &[f64], alpha: f64) -> f64 {
    let g = w.transpose_mul_vec(y);
    g.iter().fold(0.0f64, |m, v| m.max(v.abs())) / alpha.max(1e-3)
}

/// Geometric grid of `size` values from `lambda_max` down `decades` decades.
pub fn lambda_grid(lambda_max: f64, size: usize, decades: f64) -> Vec<f64> {
    if size == 1 {
        return vec![lambda_max];
    }
    (0..size)
        .map(|i| lambda_max * 10f64.powf(-decades * i as f64 / (size - 1) as f64))
        .collect()
}

/// Fold index of every row: a seeded shuffle, then round-robin.
pub fn fold_assignment(rows: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rows).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; rows];
    for (i, &row) in order.iter().enumerate() {
        fold[row] = i % folds;
    }
    fold
}

/// Cross-validation curve over a lambda grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CvCurve {
    pub lambdas: Vec<f64>,
    pub mean: Vec<f64>,
    pub standard_error: Vec<f64>,
    pub selected: usize,
}

impl CvCurve {
    pub fn selected_lambda(&self) -> f64 {
        self.lambdas[self.selected]
    }
}

/// Held-out mean squared error along the lambda path for one fold.
fn fold_errors(w: &SparseMatrix, y: &[f64], fold: &[usize], k: usize, lambdas: &[f64], config: &ElasticNetConfig) -> Result<Vec<f64>> {
    let train: Vec<usize> = (0..y.len()).filter(|&i| fold[i] != k).collect();
    let test: Vec<usize> = (0..y.len()).filter(|&i| fold[i] == k).collect();
    let reduced = ReducedProblem::new(&w.select_rows(&train));
    let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let w_test = w.select_rows(&test);
    let y_test: Vec<f64> = test.iter().map(|&i| y[i]).collect();
    let mut x: Option<Vec<f64>> = None;
    let mut errors = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let sol = reduced.solve(&y_train, lambda, config.alpha, config.max_iterations, config.tolerance, x.as_deref())?;
        let pred = w_test.mul_vec(&reduced.expand(&sol.x));
        let mse = y_test.iter().zip(&pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y_test.len() as f64;
        errors.push(mse);
        x = Some(sol.x);
    }
    Ok(errors)
}

/// K-fold cross-validation curve with one-standard-error selection: the
/// largest lambda whose mean held-out error is within one standard error
/// of the minimum. The standard error is the sample standard deviation of
/// the per-fold errors divided by `sqrt(K)`.
pub fn cross_validate(w: &SparseMatrix, y: &[f64], config: &ElasticNetConfig) -> Result<CvCurve> {
    config.validate()?;
    if w.nrows() != y.len() {
        return Err(Error::Contract("weight matrix rows do not match the observation".into()));
    }
    let k = config.cv_folds;
    if y.len() < k {
        return Err(Error::Contract(format!("{} observations cannot be split into {k} folds", y.len())));
    }
    let scaled;
    let w = if config.standardize {
        let inv: Vec<f64> = column_norms(w).iter().map(|n| 1.0 / n).collect();
        scaled = w.scale_columns(&inv);
        &scaled
    } else {
        w
    };
    let lmax = lambda_max(w, y, config.alpha);
    if lmax == 0.0 {
        return Ok(CvCurve { lambdas: vec![0.0], mean: vec![0.0], standard_error: vec![0.0], selected: 0 });
    }
    let lambdas = lambda_grid(lmax, config.lambda_grid_size, config.lambda_decades);
    let fold = fold_assignment(y.len(), k, config.cv_seed);
    let per_fold: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|f| fold_errors(w, y, &fold, f, &lambdas, config))
        .collect::<Result<_>>()?;
    let kf = k as f64;
    let mean: Vec<f64> = (0..lambdas.len()).map(|j| per_fold.iter().map(|e| e[j]).sum::<f64>() / kf).collect();
    let standard_error: Vec<f64> = (0..lambdas.len())
        .map(|j| {
            let var = per_fold.iter().map(|e| (e[j] - mean[j]).powi(2)).sum::<f64>() / (kf - 1.0);
            (var / kf).sqrt()
        })
        .collect();
    let mut best = 0;
    for j in 1..mean.len() {
        if mean[j] < mean[best] {
            best = j;
        }
    }
    let bound = mean[best] + standard_error[best];
    let selected = (0..mean.len()).find(|&j| mean[j] <= bound).unwrap_or(best);
    Ok(CvCurve { lambdas, mean, standard_error, selected })
}

/// The one-standard-error lambda.
pub fn select_lambda_1se(w: &SparseMatrix, y: &[f64], config: &ElasticNetConfig) -> Result<f64> {
    Ok(cross_validate(w, y, config)?.selected_lambda())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn grid_shape() {
        let g = lambda_grid(2.0, 100, 4.0);
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 2.0);
        assert!((g[99] - 2e-4).abs() < 1e-15);
        assert!(g.windows(2).all(|p| p[1] < p[0]));
    }

    #[test]
    fn folds_are_balanced_and_seeded() {
        let f = fold_assignment(23, 5, 7);
        for k in 0..5 {
            let n = f.iter().filter(|&&x| x == k).count();
            assert!(n == 4 || n == 5);
        }
        assert_eq!(f, fold_assignment(23, 5, 7));
        assert_ne!(f, fold_assignment(23, 5, 8));
    }

    #[test]
    fn null_problem_returns_lambda_max() {
        let w = SparseMatrix::from_dense(6, 2, &[1.0; 12]).unwrap();
        let cfg = ElasticNetConfig::default();
        assert_eq!(select_lambda_1se(&w, &[0.0; 6], &cfg).unwrap(), 0.0);
    }

    #[test]
    fn selection_shrinks_with_noise() {
        // One coefficient, many noisy observations of it.
        let n = 40;
        let w = SparseMatrix::from_dense(n, 1, &vec![1.0; n]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = ElasticNetConfig { alpha: 1.0, ..ElasticNetConfig::default() };
        let mut prev = f64::INFINITY;
        for noise in [1.0, 0.1, 0.001] {
            let y: Vec<f64> = (0..n).map(|_| 1.0 + noise * rng.random_range(-1.0..1.0)).collect();
            let lam = select_lambda_1se(&w, &y, &cfg).unwrap();
            let rel = lam / lambda_max(&w, &y, 1.0);
            assert!(rel <= prev, "{rel} > {prev}");
            prev = rel;
        }
        assert!(prev < 0.05);
    }

    #[test]
    fn too_few_rows() {
        let w = SparseMatrix::from_dense(3, 1, &[1.0; 3]).unwrap();
        assert!(select_lambda_1se(&w, &[1.0; 3], &ElasticNetConfig::default()).is_err());
    }
}
