use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::reduce::ReducedProblem;
use super::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoLambda {
    #[serde(rename = "auto_1se")]
    OneStandardError,
}

/// Regularization strength: a fixed value or cross-validated selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSetting {
    Fixed(f64),
    Auto(AutoLambda),
}

impl Default for LambdaSetting {
    fn default() -> Self {
        LambdaSetting::Auto(AutoLambda::OneStandardError)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElasticNetConfig {
    pub alpha: f64,
    pub lambda: LambdaSetting,
    pub cv_folds: usize,
    pub cv_seed: u64,
    pub lambda_grid_size: usize,
    /// Decades spanned by the lambda grid below `lambda_max`.
    pub lambda_decades: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Scale columns to unit norm before solving.
    pub standardize: bool,
}

impl Default for ElasticNetConfig {
    fn default() -> Self {
        Self {
            alpha: 0.87,
            lambda: LambdaSetting::default(),
            cv_folds: 5,
            cv_seed: 0,
            lambda_grid_size: 100,
            lambda_decades: 4.0,
            max_iterations: 10_000,
            tolerance: 1e-6,
            standardize: false,
        }
    }
}

impl ElasticNetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if let LambdaSetting::Fixed(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("lambda must be non-negative, got {l}")));
            }
        }
        if self.cv_folds < 2 {
            return Err(Error::Config(format!("cv_folds must be at least 2, got {}", self.cv_folds)));
        }
        if self.lambda_grid_size == 0 || !(self.lambda_decades >= 0.0) {
            return Err(Error::Config("lambda grid must have at least one point".into()));
        }
        if self.max_iterations == 0 || !(self.tolerance > 0.0) {
            return Err(Error::Config("solver needs positive iterations and tolerance".into()));
        }
        Ok(())
    }
}

/// Raw solver output.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Soft-thresholding. Values within rounding distance of the threshold
/// map to zero so that the solution at `lambda_max` is exactly null.
fn soft_threshold(z: f64, t: f64) -> f64 {
    let t = t * (1.0 + 1e-12);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// `(1/2)||y - W x||^2 + lambda [ (1 - alpha)/2 ||x||^2 + alpha ||x||_1 ]`.
pub fn objective(w: &SparseMatrix, y: &[f64], x: &[f64], lambda: f64, alpha: f64) -> f64 {
    let wx = w.mul_vec(x);
    let fit: f64 = y.iter().zip(&wx).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * 0.5;
    let l2: f64 = x.iter().map(|v| v * v).sum();
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    fit + lambda * (0.5 * (1.0 - alpha) * l2 + alpha * l1)
}

/// Largest subgradient-condition violation at `x`: for nonzero coordinates
/// `|g_v - lambda(1-alpha) x_v - lambda alpha sign(x_v)|`, for zeros
/// `max(0, |g_v| - lambda alpha)`, where `g = W^T (y - W x)`.
pub fn kkt_violation(w: &SparseMatrix, y: &[f64], x: &[f64], lambda: f64, alpha: f64) -> f64 {
    let wx = w.mul_vec(x);
    let r: Vec<f64> = y.iter().zip(&wx).map(|(a, b)| a - b).collect();
    let g = w.transpose_mul_vec(&r);
    g.iter()
        .zip(x)
        .map(|(&gv, &xv)| {
            if xv != 0.0 {
                (gv - lambda * (1.0 - alpha) * xv - lambda * alpha * xv.signum()).abs()
            } else {
                (gv.abs() - lambda * alpha).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Cyclic coordinate descent with a residual vector and an active-set
/// inner loop, starting from `x0`.
pub fn coordinate_descent(
    w: &SparseMatrix,
    y: &[f64],
    lambda: f64,
    alpha: f64,
    max_iterations: usize,
    tolerance: f64,
    x0: Option<&[f64]>,
) -> Result<Solution> {
    weighted_coordinate_descent(w, y, lambda, alpha, None, max_iterations, tolerance, x0)
}

/// Columns packed contiguously for the sweep loops.
struct Packed {
    ptr: Vec<usize>,
    rows: Vec<usize>,
    vals: Vec<f64>,
    /// Original coordinate of each packed column.
    coord: Vec<usize>,
}

impl Packed {
    fn new(w: &SparseMatrix, coords: Vec<usize>) -> Self {
        let mut ptr = Vec::with_capacity(coords.len() + 1);
        let mut rows = Vec::new();
        let mut vals = Vec::new();
        ptr.push(0);
        for &c in &coords {
            let (r, v) = w.column(c);
            rows.extend_from_slice(r);
            vals.extend_from_slice(v);
            ptr.push(rows.len());
        }
        Self { ptr, rows, vals, coord: coords }
    }

    /// One cyclic pass; returns the largest coordinate change.
    fn sweep(&self, x: &mut [f64], r: &mut [f64], sq_norms: &[f64], thresh: &[f64], denom: &[f64]) -> f64 {
        let mut max_delta = 0.0f64;
        for (k, &c) in self.coord.iter().enumerate() {
            let rows = &self.rows[self.ptr[k]..self.ptr[k + 1]];
            let vals = &self.vals[self.ptr[k]..self.ptr[k + 1]];
            let old = x[c];
            let mut rho = sq_norms[c] * old;
            for (&i, &v) in rows.iter().zip(vals) {
                rho += v * r[i];
            }
            let new = soft_threshold(rho, thresh[c]) / denom[c];
            let delta = new - old;
            if delta != 0.0 {
                for (&i, &v) in rows.iter().zip(vals) {
                    r[i] -= v * delta;
                }
                x[c] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        max_delta
    }

    /// Residual after moving the packed coordinates from `from` to `to`.
    fn shifted_residual(&self, r: &[f64], from: &[f64], to: &[f64]) -> Vec<f64> {
        let mut out = r.to_vec();
        for k in 0..self.coord.len() {
            let delta = to[k] - from[k];
            if delta != 0.0 {
                for j in self.ptr[k]..self.ptr[k + 1] {
                    out[self.rows[j]] -= self.vals[j] * delta;
                }
            }
        }
        out
    }
}

/// Coordinate descent where coordinate `c` carries penalty
/// `lambda * p[c] * ((1 - alpha)/2 x_c^2 + alpha |x_c|)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn weighted_coordinate_descent(
    w: &SparseMatrix,
    y: &[f64],
    lambda: f64,
    alpha: f64,
    penalty: Option<&[f64]>,
    max_iterations: usize,
    tolerance: f64,
    x0: Option<&[f64]>,
) -> Result<Solution> {
    if w.nrows() != y.len() {
        return Err(Error::Contract(format!(
            "weight matrix has {} rows but the observation has {} entries",
            w.nrows(),
            y.len()
        )));
    }
    let m = w.ncols();
    let mut x = match x0 {
        Some(x0) if x0.len() == m => x0.to_vec(),
        Some(_) => return Err(Error::Contract("warm start has the wrong length".into())),
        None => vec![0.0; m],
    };
    let sq_norms: Vec<f64> = (0..m).map(|c| w.column(c).1.iter().map(|v| v * v).sum()).collect();
    let mut r = y.to_vec();
    let wx = w.mul_vec(&x);
    r.iter_mut().zip(&wx).for_each(|(a, b)| *a -= b);

    let l1 = lambda * alpha;
    let l2 = lambda * (1.0 - alpha);
    let factor = |c: usize| penalty.map_or(1.0, |p| p[c]);
    let thresh: Vec<f64> = (0..m).map(|c| l1 * factor(c)).collect();
    let denom: Vec<f64> = (0..m).map(|c| sq_norms[c] + l2 * factor(c)).collect();
    // Columns that can never move: empty, or with nothing to divide by.
    let movable: Vec<usize> = (0..m).filter(|&c| sq_norms[c] > 0.0 && denom[c] > 0.0).collect();
    for c in 0..m {
        if !(sq_norms[c] > 0.0 && denom[c] > 0.0) && x[c] != 0.0 {
            x[c] = 0.0;
        }
    }
    let all = Packed::new(w, movable);
    let objective_at = |coords: &[usize], vals: &[f64], r: &[f64]| -> f64 {
        let pen: f64 = coords
            .iter()
            .zip(vals)
            .map(|(&c, &v)| factor(c) * (0.5 * l2 * v * v + l1 * v.abs()))
            .sum();
        0.5 * r.iter().map(|v| v * v).sum::<f64>() + pen
    };

    let mut iterations = 0;
    loop {
        // Full sweep over every coordinate.
        iterations += 1;
        let max_delta = all.sweep(&mut x, &mut r, &sq_norms, &thresh, &denom);
        if max_delta < tolerance {
            return Ok(Solution { x, lambda, iterations, converged: true });
        }
        if iterations >= max_iterations {
            return Ok(Solution { x, lambda, iterations, converged: false });
        }
        // Sweeps over the current support until it settles, with Anderson
        // extrapolation of every few iterates.
        let mut active = Packed::new(w, all.coord.iter().copied().filter(|&c| x[c] != 0.0).collect());
        let snapshot = |active: &Packed, x: &[f64]| -> Vec<f64> { active.coord.iter().map(|&c| x[c]).collect() };
        let mut history: Vec<Vec<f64>> = vec![snapshot(&active, &x)];
        loop {
            iterations += 1;
            let max_delta = active.sweep(&mut x, &mut r, &sq_norms, &thresh, &denom);
            if max_delta < tolerance {
                break;
            }
            if iterations >= max_iterations {
                return Ok(Solution { x, lambda, iterations, converged: false });
            }
            history.push(snapshot(&active, &x));
            if history.len() == ANDERSON_DEPTH + 1 {
                let current = history.last().expect("history is nonempty").clone();
                let mut best = objective_at(&active.coord, &current, &r);
                let candidates = [
                    newton_point(&active, &current, &r, l1, l2, &factor),
                    anderson_point(&history),
                ];
                for candidate in candidates.into_iter().flatten() {
                    let from: Vec<f64> = active.coord.iter().map(|&c| x[c]).collect();
                    let r_new = active.shifted_residual(&r, &from, &candidate);
                    let value = objective_at(&active.coord, &candidate, &r_new);
                    if value < best {
                        best = value;
                        for (&c, &v) in active.coord.iter().zip(&candidate) {
                            x[c] = v;
                        }
                        r = r_new;
                    }
                }
                // Coordinates that fell to zero leave the inner loop; the
                // next full sweep can bring them back.
                let zeros = active.coord.iter().filter(|&&c| x[c] == 0.0).count();
                if zeros * 10 > active.coord.len() {
                    active = Packed::new(w, active.coord.iter().copied().filter(|&c| x[c] != 0.0).collect());
                }
                history.clear();
                history.push(snapshot(&active, &x));
            }
        }
    }
}

const ANDERSON_DEPTH: usize = 5;

/// Exact minimizer over the nonzero active coordinates with their current
/// signs held fixed. With ridge weight `l2 > 0` the normal equations
/// `(W^T W + D) x = W^T y - l1 P s` are solved through the Woodbury
/// identity, which only needs a rows-by-rows factorization.
fn newton_point(
    active: &Packed,
    current: &[f64],
    r: &[f64],
    l1: f64,
    l2: f64,
    factor: &dyn Fn(usize) -> f64,
) -> Option<Vec<f64>> {
    if !(l2 > 0.0) {
        return None;
    }
    let n = r.len();
    // Observation seen by the active columns: y = r + W_A x_A.
    let mut y = r.to_vec();
    for (k, &v) in current.iter().enumerate() {
        if v != 0.0 {
            for j in active.ptr[k]..active.ptr[k + 1] {
                y[active.rows[j]] += active.vals[j] * v;
            }
        }
    }
    // u = D^-1 b, with b = W_A^T y - l1 P s; K = I + W_A D^-1 W_A^T.
    let mut u = vec![0.0; current.len()];
    let mut k_mat = nalgebra::DMatrix::<f64>::identity(n, n);
    for (k, &v) in current.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let p = factor(active.coord[k]);
        let d = l2 * p;
        let range = active.ptr[k]..active.ptr[k + 1];
        let wty: f64 = range.clone().map(|j| active.vals[j] * y[active.rows[j]]).sum();
        u[k] = (wty - l1 * p * v.signum()) / d;
        for a in range.clone() {
            for b in range.clone() {
                k_mat[(active.rows[a], active.rows[b])] += active.vals[a] * active.vals[b] / d;
            }
        }
    }
    let mut wu = nalgebra::DVector::<f64>::zeros(n);
    for (k, &uk) in u.iter().enumerate() {
        for j in active.ptr[k]..active.ptr[k + 1] {
            wu[active.rows[j]] += active.vals[j] * uk;
        }
    }
    let z = k_mat.cholesky()?.solve(&wu);
    let out: Vec<f64> = current
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            if v == 0.0 {
                return 0.0;
            }
            let d = l2 * factor(active.coord[k]);
            let wtz: f64 = (active.ptr[k]..active.ptr[k + 1]).map(|j| active.vals[j] * z[active.rows[j]]).sum();
            u[k] - wtz / d
        })
        .collect();
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Anderson extrapolation from consecutive iterates: the affine
/// combination of the last iterates whose differences have minimal norm.
fn anderson_point(history: &[Vec<f64>]) -> Option<Vec<f64>> {
    let k = history.len() - 1;
    let diffs: Vec<Vec<f64>> = (0..k)
        .map(|i| history[i + 1].iter().zip(&history[i]).map(|(a, b)| a - b).collect())
        .collect();
    let gram = nalgebra::DMatrix::from_fn(k, k, |i, j| diffs[i].iter().zip(&diffs[j]).map(|(a, b)| a * b).sum::<f64>());
    let scale = gram.trace();
    if !(scale > 0.0) {
        return None;
    }
    let regularized = gram / scale + nalgebra::DMatrix::identity(k, k) * 1e-10;
    let z = regularized.cholesky()?.solve(&nalgebra::DVector::from_element(k, 1.0));
    let total: f64 = z.iter().sum();
    if !(total.abs() > 0.0) || !z.iter().all(|v| v.is_finite()) {
        return None;
    }
    let coeffs: Vec<f64> = z.iter().map(|v| v / total).collect();
    let n = history[0].len();
    Some((0..n).map(|j| coeffs.iter().enumerate().map(|(i, c)| c * history[i + 1][j]).sum()).collect())
}

/// Column norms used for standardization; zero columns keep scale 1.
pub fn column_norms(w: &SparseMatrix) -> Vec<f64> {
    (0..w.ncols())
        .map(|c| {
            let n = w.column(c).1.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect()
}

/// Elastic Net at a fixed lambda, honouring the standardization flag.
/// Identical columns are merged before solving.
pub fn elastic_net_fixed(w: &SparseMatrix, y: &[f64], lambda: f64, config: &ElasticNetConfig) -> Result<Solution> {
    config.validate()?;
    if w.nrows() != y.len() {
        return Err(Error::Contract(format!(
            "weight matrix has {} rows but the observation has {} entries",
            w.nrows(),
            y.len()
        )));
    }
    let inv: Option<Vec<f64>> = config.standardize.then(|| column_norms(w).iter().map(|n| 1.0 / n).collect());
    let scaled;
    let w = match &inv {
        Some(inv) => {
            scaled = w.scale_columns(inv);
            &scaled
        }
        None => w,
    };
    let reduced = ReducedProblem::new(w);
    let sol = reduced.solve(y, lambda, config.alpha, config.max_iterations, config.tolerance, None)?;
    let mut x = reduced.expand(&sol.x);
    if let Some(inv) = &inv {
        x.iter_mut().zip(inv).for_each(|(x, s)| *x *= s);
    }
    Ok(Solution { x, ..sol })
}
