//! Target position estimation from voxel images, and error metrics.

mod assign;

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

pub use assign::hungarian;

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::rti::VoxelImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocateConfig {
    /// Activity threshold as a fraction of the image maximum.
    pub threshold: f64,
    pub eps: f64,
    pub min_pts: usize,
    /// Error charged to a truth with no estimate; room diagonal when unset.
    pub penalty: Option<f64>,
}

impl Default for LocateConfig {
    fn default() -> Self {
        Self { threshold: 0.5, eps: 0.5, min_pts: 3, penalty: None }
    }
}

impl LocateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold must lie in (0, 1), got {}", self.threshold)));
        }
        if !(self.eps > 0.0) || self.min_pts == 0 {
            return Err(Error::Config("DBSCAN needs eps > 0 and min_pts >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinarizedImage {
    /// Active voxel indices, increasing.
    pub active: Vec<usize>,
    pub threshold: f64,
}

/// Voxels strictly above `fraction * max`. An image without a positive
/// maximum has no active voxels.
pub fn binarize(image: &VoxelImage, fraction: f64) -> BinarizedImage {
    let max = image.max();
    let active = if max > 0.0 {
        let level = fraction * max;
        (0..image.values.len()).filter(|&v| image.values[v] > level).collect()
    } else {
        Vec::new()
    };
    BinarizedImage { active, threshold: fraction }
}

/// DBSCAN over `points`; returns clusters as lists of point indices.
///
/// Neighborhoods are closed balls of radius `eps` and include the point
/// itself. Points are visited in index order, so clusters are numbered by
/// their lowest core point and a border point joins the first cluster that
/// reaches it. Noise points are omitted.
pub fn dbscan(points: &[Point2], eps: f64, min_pts: usize) -> Vec<Vec<usize>> {
    let n = points.len();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| points[i].distance(points[j]) <= eps).collect())
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if label[start].is_some() || !core[start] {
            continue;
        }
        let id = clusters.len();
        let mut members = vec![start];
        label[start] = Some(id);
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbors[p] {
                if label[q].is_none() {
                    label[q] = Some(id);
                    members.push(q);
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    clusters
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Voxel indices, increasing.
    pub members: Vec<usize>,
    pub centroid: Point2,
    /// Sum of member voxel values.
    pub score: f64,
}

/// Clusters the active voxels of an image and scores each cluster.
pub fn cluster_image(image: &VoxelImage, binary: &BinarizedImage, eps: f64, min_pts: usize) -> Vec<Cluster> {
    let centers: Vec<Point2> = binary.active.iter().map(|&v| image.grid.center(v)).collect();
    dbscan(&centers, eps, min_pts)
        .into_iter()
        .map(|idx| {
            let members: Vec<usize> = idx.iter().map(|&i| binary.active[i]).collect();
            let score: f64 = members.iter().map(|&v| image.values[v]).sum();
            let weighted = members
                .iter()
                .fold(Point2::default(), |acc, &v| acc + image.grid.center(v) * image.values[v]);
            Cluster { members, centroid: weighted * (1.0 / score), score }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    pub points: Vec<Point2>,
    /// Fewer clusters than expected targets.
    pub shortfall: bool,
}

/// Centroids of the `k` highest-scoring clusters.
pub fn estimate_positions(clusters: &[Cluster], k: usize) -> Estimates {
    let mut order: Vec<usize> = (0..clusters.len()).collect();
    order.sort_by(|&a, &b| clusters[b].score.total_cmp(&clusters[a].score));
    Estimates {
        points: order.iter().take(k).map(|&i| clusters[i].centroid).collect(),
        shortfall: clusters.len() < k,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationResult {
    pub estimates: Vec<Point2>,
    pub truth: Vec<Point2>,
    /// Error per truth, m.
    pub errors: Vec<f64>,
    /// Estimate matched to each truth.
    pub assignment: Vec<Option<usize>>,
}

/// Pairs estimates with truths by minimum total distance. Truths left
/// without an estimate are charged `penalty`.
pub fn localization_error(estimates: &[Point2], truth: &[Point2], penalty: f64) -> Result<LocalizationResult> {
    if truth.is_empty() {
        return Err(Error::Contract("localization error needs at least one truth".into()));
    }
    let n = estimates.len().max(truth.len());
    let mut cost = vec![0.0; n * n];
    for t in 0..n {
        for e in 0..n {
            cost[t * n + e] = match (truth.get(t), estimates.get(e)) {
                (Some(tp), Some(ep)) => tp.distance(*ep),
                (Some(_), None) => penalty,
                _ => 0.0,
            };
        }
    }
    let pick = hungarian(&cost, n);
    let mut errors = Vec::with_capacity(truth.len());
    let mut assignment = Vec::with_capacity(truth.len());
    for (t, tp) in truth.iter().enumerate() {
        let e = pick[t];
        if e < estimates.len() {
            errors.push(tp.distance(estimates[e]));
            assignment.push(Some(e));
        } else {
            errors.push(penalty);
            assignment.push(None);
        }
    }
    Ok(LocalizationResult { estimates: estimates.to_vec(), truth: truth.to_vec(), errors, assignment })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSummary {
    pub mean: f64,
    pub median: f64,
    /// Sorted `(error, cumulative fraction)` at every observed error.
    pub cdf: Vec<(f64, f64)>,
}

pub fn empirical_cdf(errors: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.into_iter().enumerate().map(|(i, e)| (e, (i + 1) as f64 / n)).collect()
}

pub fn median(values: &[f64]) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn summarize(errors: &[f64]) -> ErrorSummary {
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    ErrorSummary { mean, median: median(errors), cdf: empirical_cdf(errors) }
}

/// Writes `error_m,cumulative_fraction` rows.
pub fn write_cdf_csv<W: Write>(writer: W, cdf: &[(f64, f64)]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["error_m", "cumulative_fraction"])?;
    for (e, f) in cdf {
        csv.write_record([e.to_string(), f.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

/// One row per truth: `position,target,truth_x,truth_y,est_x,est_y,error_m`.
/// Estimate columns are empty for unmatched truths.
pub fn write_results_csv<W: Write>(writer: W, results: &[(usize, LocalizationResult)]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["position", "target", "truth_x", "truth_y", "est_x", "est_y", "error_m"])?;
    for (position, r) in results {
        for (t, tp) in r.truth.iter().enumerate() {
            let (ex, ey) = match r.assignment[t] {
                Some(e) => (r.estimates[e].x.to_string(), r.estimates[e].y.to_string()),
                None => (String::new(), String::new()),
            };
            csv.write_record([
                position.to_string(),
                t.to_string(),
                tp.x.to_string(),
                tp.y.to_string(),
                ex,
                ey,
                r.errors[t].to_string(),
            ])?;
        }
    }
    csv.flush()?;
    Ok(())
}
