//! Bayesian optimization of the imaging parameters against localization
//! error on a calibration set.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::beamform::RssChangeVector;
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::harness::{localize, Config, PreparedScene};
use crate::locate::localization_error;
use crate::rti::ElasticNetConfig;

/// Length scales tried when fitting the surrogate, in unit-box units.
pub const LENGTH_SCALES: [f64; 7] = [0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.2];
pub const JITTER: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Dimension {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneSpace {
    pub dims: Vec<Dimension>,
    pub budget: usize,
    pub seed: u64,
    /// Random acquisition candidates per step.
    pub candidates: usize,
    /// Value recorded for evaluations that return a non-finite objective.
    pub penalty: f64,
}

impl TuneSpace {
    pub fn new(dims: Vec<Dimension>, budget: usize, seed: u64, penalty: f64) -> Result<Self> {
        let space = Self { dims, budget, seed, candidates: 1024, penalty };
        space.validate()?;
        Ok(space)
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    /// Latin hypercube size: `max(5, dim + 2)`, capped by the budget.
    pub fn initial_size(&self) -> usize {
        5.max(self.dim() + 2).min(self.budget)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::Config("tuning space has no dimensions".into()));
        }
        for d in &self.dims {
            if !(d.lower.is_finite() && d.upper.is_finite() && d.lower < d.upper) {
                return Err(Error::Config(format!("bounds of {} need lower < upper, got [{}, {}]", d.name, d.lower, d.upper)));
            }
        }
        if self.budget < self.dim() + 2 {
            return Err(Error::Config(format!("budget {} is below dimension + 2 = {}", self.budget, self.dim() + 2)));
        }
        if self.candidates == 0 {
            return Err(Error::Config("tuning needs at least one acquisition candidate".into()));
        }
        if !self.penalty.is_finite() {
            return Err(Error::Config("tuning penalty must be finite".into()));
        }
        Ok(())
    }

    fn to_params(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter().zip(&self.dims).map(|(u, d)| d.lower + u * (d.upper - d.lower)).collect()
    }
}

/// Every evaluation in order.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneTrace {
    pub names: Vec<String>,
    pub params: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub best: usize,
}

impl TuneTrace {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn best_value(&self) -> f64 {
        self.values[self.best]
    }

    pub fn best_params(&self) -> &[f64] {
        &self.params[self.best]
    }

    pub fn best_so_far(&self) -> Vec<f64> {
        self.values
            .iter()
            .scan(f64::INFINITY, |m, &v| {
                *m = m.min(v);
                Some(*m)
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["evaluation".to_string()];
        header.extend(self.names.iter().cloned());
        header.extend(["objective".to_string(), "best_so_far".to_string()]);
        w.write_record(&header)?;
        for (i, ((p, v), b)) in self.params.iter().zip(&self.values).zip(self.best_so_far()).enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(p.iter().map(|x| x.to_string()));
            row.extend([v.to_string(), b.to_string()]);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Stratified sample of `n` points in the unit box.
pub fn latin_hypercube(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dim]; n];
    for d in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (p, s) in points.iter_mut().zip(strata) {
            p[d] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    points
}

/// Zero-mean Gaussian process with a squared-exponential kernel on the
/// unit box, fitted to standardized observations.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    x: Vec<Vec<f64>>,
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
    pub length_scale: f64,
    pub log_likelihood: f64,
    mean: f64,
    scale: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kernel(a: &[f64], b: &[f64], length_scale: f64) -> f64 {
    (-sq_dist(a, b) / (2.0 * length_scale * length_scale)).exp()
}

impl GaussianProcess {
    /// Fits every length scale in [`LENGTH_SCALES`] and keeps the one with
    /// the highest marginal likelihood.
    pub fn fit(x: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::Contract("surrogate needs matching nonempty inputs and outputs".into()));
        }
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let scale = if sd > 0.0 { sd } else { 1.0 };
        let z = DVector::from_iterator(y.len(), y.iter().map(|v| (v - mean) / scale));
        let mut best: Option<Self> = None;
        for &ls in &LENGTH_SCALES {
            let k = DMatrix::from_fn(x.len(), x.len(), |i, j| kernel(&x[i], &x[j], ls) + if i == j { JITTER } else { 0.0 });
            let Some(chol) = k.cholesky() else { continue };
            let weights = chol.solve(&z);
            let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
            let ll = -0.5 * z.dot(&weights) - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
            if best.as_ref().is_none_or(|b| ll > b.log_likelihood) {
                best = Some(Self { x: x.to_vec(), chol, weights, length_scale: ls, log_likelihood: ll, mean, scale });
            }
        }
        best.ok_or_else(|| Error::Contract("surrogate covariance is not positive definite".into()))
    }

    /// Predictive mean and standard deviation in objective units.
    pub fn predict(&self, p: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| kernel(xi, p, self.length_scale)));
        let mu = k.dot(&self.weights);
        let v = self.chol.solve(&k);
        let var = (1.0 - k.dot(&v)).max(0.0);
        (self.mean + self.scale * mu, self.scale * var.sqrt())
    }
}

/// Expected improvement below `best` for a minimization problem.
pub fn expected_improvement(mu: f64, sigma: f64, best: f64) -> f64 {
    if sigma <= 0.0 {
        return (best - mu).max(0.0);
    }
    let n = Normal::standard();
    let z = (best - mu) / sigma;
    (best - mu) * n.cdf(z) + sigma * n.pdf(z)
}

/// Coordinate pattern search on expected improvement inside the unit box.
fn refine(gp: &GaussianProcess, start: &[f64], best: f64) -> (Vec<f64>, f64) {
    let ei = |p: &[f64]| {
        let (mu, sd) = gp.predict(p);
        expected_improvement(mu, sd, best)
    };
    let mut p = start.to_vec();
    let mut value = ei(&p);
    let mut step = 0.05;
    while step > 1e-3 {
        let mut moved = false;
        for d in 0..p.len() {
            for sign in [1.0, -1.0] {
                let mut q = p.clone();
                q[d] = (q[d] + sign * step).clamp(0.0, 1.0);
                let v = ei(&q);
                if v > value {
                    p = q;
                    value = v;
                    moved = true;
                }
            }
        }
        if !moved {
            step /= 2.0;
        }
    }
    (p, value)
}

/// Minimizes `objective` over the space: a Latin hypercube start, then one
/// expected-improvement step per remaining evaluation. Non-finite
/// objective values are recorded as the space's penalty.
pub fn bayes_optimize<F>(mut objective: F, space: &TuneSpace) -> Result<TuneTrace>
where
    F: FnMut(&[f64]) -> f64,
{
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(space.seed);
    let dim = space.dim();
    let mut unit: Vec<Vec<f64>> = Vec::with_capacity(space.budget);
    let mut params = Vec::with_capacity(space.budget);
    let mut values: Vec<f64> = Vec::with_capacity(space.budget);
    let mut evaluate = |u: Vec<f64>, unit: &mut Vec<Vec<f64>>, values: &mut Vec<f64>| {
        let p = space.to_params(&u);
        let v = objective(&p);
        let v = if v.is_finite() { v } else { space.penalty };
        log::info!("evaluation {}: {:?} -> {v}", values.len(), p);
        unit.push(u);
        params.push(p);
        values.push(v);
    };
    for u in latin_hypercube(space.initial_size(), dim, &mut rng) {
        evaluate(u, &mut unit, &mut values);
    }
    while values.len() < space.budget {
        let gp = GaussianProcess::fit(&unit, &values)?;
        let best = values.iter().copied().fold(f64::INFINITY, f64::min);
        let mut scored: Vec<(f64, Vec<f64>)> = (0..space.candidates)
            .map(|_| {
                let c: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
                let (mu, sd) = gp.predict(&c);
                (expected_improvement(mu, sd, best), c)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let incumbent = argmin(&values).map(|i| unit[i].clone());
        let starts = scored.iter().take(5).map(|(_, c)| c.clone()).chain(incumbent);
        let mut choice: Option<(Vec<f64>, f64)> = None;
        for s in starts {
            let (p, v) = refine(&gp, &s, best);
            let fresh = unit.iter().all(|u| sq_dist(u, &p) > 1e-12);
            if fresh && choice.as_ref().is_none_or(|c| v > c.1) {
                choice = Some((p, v));
            }
        }
        let next = match choice {
            Some((p, _)) => p,
            None => (0..dim).map(|_| rng.random::<f64>()).collect(),
        };
        evaluate(next, &mut unit, &mut values);
    }
    let best = argmin(&values).unwrap_or(0);
    Ok(TuneTrace { names: space.dims.iter().map(|d| d.name.clone()).collect(), params, values, best })
}

fn argmin(values: &[f64]) -> Option<usize> {
    values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i)
}

/// Tunable imaging parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneParams {
    pub alpha: f64,
    pub gamma: f64,
    pub threshold: f64,
}

impl TuneParams {
    pub fn from_config(config: &Config) -> Self {
        Self { alpha: config.elastic_net.alpha, gamma: config.rti.gamma, threshold: config.locate.threshold }
    }

    /// Reads `alpha`, `gamma` and optionally `threshold` from a point of
    /// the search space; missing names keep the values of `base`.
    pub fn from_point(space: &TuneSpace, point: &[f64], base: TuneParams) -> Self {
        let mut p = base;
        for (d, &v) in space.dims.iter().zip(point) {
            match d.name.as_str() {
                "alpha" => p.alpha = v,
                "gamma" => p.gamma = v,
                "threshold" => p.threshold = v,
                _ => {}
            }
        }
        p
    }
}

/// Calibration scenes with their RSS changes measured once.
#[derive(Debug, Clone)]
pub struct CalibrationSet {
    pub scenes: Vec<(Vec<Point2>, RssChangeVector)>,
}

impl CalibrationSet {
    pub fn measure(prepared: &PreparedScene, scenes: &[Vec<Point2>]) -> Result<Self> {
        if scenes.is_empty() {
            return Err(Error::Contract("calibration set is empty".into()));
        }
        let scenes = scenes
            .par_iter()
            .enumerate()
            .map(|(i, truth)| Ok((truth.clone(), prepared.measure(truth, i as u64 + 1)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { scenes })
    }
}

/// Mean localization error over the calibration set with the weight
/// matrix rebuilt for `params.gamma`. Scenes that fail to image are
/// charged the penalty distance.
pub fn objective_mean_error(prepared: &PreparedScene, calibration: &CalibrationSet, params: TuneParams) -> Result<f64> {
    if calibration.scenes.is_empty() {
        return Err(Error::Contract("calibration set is empty".into()));
    }
    let penalty = prepared.config.penalty()?;
    let weights = prepared.weights(params.gamma)?;
    let elastic = ElasticNetConfig { alpha: params.alpha, ..prepared.config.elastic_net };
    let errors = calibration
        .scenes
        .par_iter()
        .map(|(truth, rss)| -> Result<Vec<f64>> {
            match localize(prepared, &weights, rss, &elastic, params.threshold, truth) {
                Ok((_, estimates, _)) => Ok(localization_error(&estimates, truth, penalty)?.errors),
                Err(Error::Contract(_) | Error::Geometry(_)) => Ok(vec![penalty; truth.len()]),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<f64> = errors.into_iter().flatten().collect();
    Ok(all.iter().sum::<f64>() / all.len() as f64)
}

/// Search space described by the `[tune]` section.
pub fn space_of(config: &Config) -> Result<TuneSpace> {
    let t = &config.tune;
    let dim = |name: &str, b: [f64; 2]| Dimension { name: name.into(), lower: b[0], upper: b[1] };
    let mut dims = vec![dim("alpha", t.alpha_bounds), dim("gamma", t.gamma_bounds)];
    if let Some(b) = t.threshold_bounds {
        dims.push(dim("threshold", b));
    }
    let space = TuneSpace { dims, budget: t.budget, seed: t.seed, candidates: t.candidates, penalty: config.penalty()? };
    space.validate()?;
    Ok(space)
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub trace: TuneTrace,
    pub best: TuneParams,
    /// Objective at the configured parameters on the same calibration set.
    pub baseline: f64,
}

/// Tunes over the configured calibration positions, one single-target
/// scene each. Writes `trace.csv`, `tuned.toml` (an overlay with the best
/// parameters) and `config.toml` when `out` is given.
pub fn tune_scenario(config: &Config, out: Option<&Path>) -> Result<TuneOutcome> {
    let space = space_of(config)?;
    let prepared = PreparedScene::new(config, config.run.seed)?;
    let scenes: Vec<Vec<Point2>> = config.calibration_positions()?.into_iter().map(|p| vec![p]).collect();
    let calibration = CalibrationSet::measure(&prepared, &scenes)?;
    let base = TuneParams::from_config(config);
    let baseline = objective_mean_error(&prepared, &calibration, base)?;
    let mut failure = None;
    let trace = bayes_optimize(
        |p| match objective_mean_error(&prepared, &calibration, TuneParams::from_point(&space, p, base)) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        &space,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let best = TuneParams::from_point(&space, trace.best_params(), base);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.toml"), config.to_toml_string()?)?;
        let mut f = std::io::BufWriter::new(fs::File::create(dir.join("trace.csv"))?);
        trace.write_csv(&mut f)?;
        f.flush()?;
        fs::write(dir.join("tuned.toml"), overlay_toml(&best, space.dims.iter().any(|d| d.name == "threshold")))?;
    }
    Ok(TuneOutcome { trace, best, baseline })
}

/// Scenario overlay carrying the tuned values.
pub fn overlay_toml(best: &TuneParams, with_threshold: bool) -> String {
    let mut s = format!("[elastic_net]\nalpha = {:?}\n\n[rti]\ngamma = {:?}\n", best.alpha, best.gamma);
    if with_threshold {
        s.push_str(&format!("\n[locate]\nthreshold = {:?}\n", best.threshold));
    }
    s
}
