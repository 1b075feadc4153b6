use crate::error::{Error, Result};
use crate::geometry::{Pathway, Point2, VoxelGrid};

use super::sparse::SparseMatrix;

/// Sparse map from voxel attenuation to pathway RSS change.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    /// Rows are global pathways, columns are voxels.
    pub w: SparseMatrix,
    /// Pathway thickness margin, m.
    pub gamma: f64,
}

/// Voxels whose centers lie strictly inside the ellipse with foci `a`, `b`
/// and major axis `|a - b| + gamma`.
pub fn ellipse_voxels(grid: &VoxelGrid, a: Point2, b: Point2, gamma: f64) -> Vec<usize> {
    let len = a.distance(b);
    let semi_major = 0.5 * (len + gamma);
    let half_focal = 0.5 * len;
    let semi_minor = (semi_major * semi_major - half_focal * half_focal).max(0.0).sqrt();
    let lo = Point2::new(a.x.min(b.x) - semi_minor, a.y.min(b.y) - semi_minor);
    let hi = Point2::new(a.x.max(b.x) + semi_minor, a.y.max(b.y) + semi_minor);
    let mut out = Vec::new();
    if let Some(((x0, x1), (y0, y1))) = grid.index_range(lo, hi) {
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                let c = grid.center_of(ix, iy);
                if c.distance(a) + c.distance(b) < len + gamma {
                    out.push(iy * grid.nx + ix);
                }
            }
        }
    }
    out
}

/// Builds the weight matrix: entry `(u, v)` is `1/sqrt(d_u)` when voxel
/// `v` lies inside the thickness ellipse of any segment of pathway `u`.
pub fn build_weight_matrix(pathways: &[Pathway], grid: &VoxelGrid, gamma: f64) -> Result<WeightMatrix> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Config(format!("pathway thickness must be positive, got {gamma}")));
    }
    if pathways.is_empty() {
        return Err(Error::Contract("weight matrix needs at least one pathway".into()));
    }
    let mut triplets = Vec::new();
    for (u, path) in pathways.iter().enumerate() {
        if !(path.total_distance > 0.0) {
            return Err(Error::Geometry(format!(
                "pathway {} of link {} has zero length",
                path.path_index, path.link_index
            )));
        }
        let value = 1.0 / path.total_distance.sqrt();
        let mut voxels: Vec<usize> = path
            .segments()
            .flat_map(|(a, b)| ellipse_voxels(grid, a, b, gamma))
            .collect();
        voxels.sort_unstable();
        voxels.dedup();
        triplets.extend(voxels.into_iter().map(|v| (u, v, value)));
    }
    let w = SparseMatrix::from_triplets(pathways.len(), grid.len(), &triplets)?;
    Ok(WeightMatrix { w, gamma })
}
