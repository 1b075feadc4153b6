//! Weight matrix construction and Elastic Net image reconstruction.

mod cv;
mod reduce;
mod solver;
mod sparse;
mod weights;

use std::io::Write;

pub use cv::{cross_validate, fold_assignment, lambda_grid, lambda_max, select_lambda_1se, CvCurve};
pub use solver::{
    column_norms, coordinate_descent, elastic_net_fixed, kkt_violation, objective, AutoLambda, ElasticNetConfig,
    LambdaSetting, Solution,
};
pub use reduce::ReducedProblem;
pub use sparse::SparseMatrix;
pub use weights::{build_weight_matrix, ellipse_voxels, WeightMatrix};

use crate::error::{Error, Result};
use crate::geometry::VoxelGrid;

/// Reconstructed attenuation image.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelImage {
    pub values: Vec<f64>,
    pub grid: VoxelGrid,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl VoxelImage {
    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Writes the image as CSV with one grid row per line, top line at the
    /// highest `y`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for iy in (0..self.grid.ny).rev() {
            let row = &self.values[iy * self.grid.nx..(iy + 1) * self.grid.nx];
            let line = row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Writes a 16-bit binary PGM, top row at the highest `y`. Values are
    /// clamped at zero and scaled so the image maximum maps to 65535; an
    /// image without positive values is written black.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        write!(w, "P5\n{nx} {ny}\n65535\n")?;
        let max = self.max();
        let scale = if max > 0.0 { 65535.0 / max } else { 0.0 };
        let mut bytes = Vec::with_capacity(nx * ny * 2);
        for iy in (0..ny).rev() {
            for v in &self.values[iy * nx..(iy + 1) * nx] {
                let level = (v.max(0.0) * scale).round().min(65535.0) as u16;
                bytes.extend_from_slice(&level.to_be_bytes());
            }
        }
        w.write_all(&bytes)?;
        Ok(())
    }
}

/// Solves for the attenuation image. `observation` is the per-pathway
/// attenuation (positive when a pathway loses power).
pub fn elastic_net(weights: &WeightMatrix, observation: &[f64], grid: &VoxelGrid, config: &ElasticNetConfig) -> Result<VoxelImage> {
    config.validate()?;
    if weights.w.ncols() != grid.len() {
        return Err(Error::Contract(format!(
            "weight matrix has {} columns but the grid has {} voxels",
            weights.w.ncols(),
            grid.len()
        )));
    }
    let lambda = match config.lambda {
        LambdaSetting::Fixed(l) => l,
        LambdaSetting::Auto(_) => select_lambda_1se(&weights.w, observation, config)?,
    };
    let sol = elastic_net_fixed(&weights.w, observation, lambda, config)?;
    if !sol.converged {
        log::warn!("elastic net stopped after {} iterations without converging", sol.iterations);
    }
    Ok(VoxelImage { values: sol.x, grid: *grid, lambda, iterations: sol.iterations, converged: sol.converged })
}
