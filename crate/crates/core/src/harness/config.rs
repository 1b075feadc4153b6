use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::beamform::RssConfig;
use crate::channel::{GainModel, WaveformSpec};
use crate::error::{Error, Result};
use crate::geometry::{perimeter_layout, NodePlacement, Point2, Room, Scene, VoxelGrid};
use crate::locate::LocateConfig;
use crate::protocol::ProtocolConfig;
use crate::rti::ElasticNetConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomSection {
    pub width: f64,
    pub depth: f64,
    pub antenna_height: f64,
}

impl Default for RoomSection {
    fn default() -> Self {
        Self { width: 7.04, depth: 6.31, antenna_height: 1.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    /// Degrees; defaults to facing the room center.
    pub boresight_deg: Option<f64>,
    pub elements: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodesSection {
    /// Node count for the perimeter layout.
    pub count: usize,
    /// Distance of the perimeter layout from the walls, m.
    pub inset: f64,
    /// Antenna elements per node.
    pub elements: usize,
    /// Explicit placements; overrides the perimeter layout when nonempty.
    pub list: Vec<NodeEntry>,
}

impl Default for NodesSection {
    fn default() -> Self {
        Self { count: 4, inset: 1.0, elements: 8, list: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub voxel_size: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { voxel_size: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    /// Highest reflection order present in the synthesized channel.
    pub max_order: usize,
    pub reflection_loss_db: f64,
    /// Noise power per channel entry, dB relative to free-space power at 1 m.
    pub noise_power_db: f64,
    pub phase_drift_std_deg: f64,
    pub target_radius: f64,
    /// Loss on blocked paths, dB; `inf` removes them.
    pub shadowing_depth_db: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            max_order: 2,
            reflection_loss_db: GainModel::default().reflection_loss_db,
            noise_power_db: -40.0,
            phase_drift_std_deg: 0.0,
            target_radius: 0.3,
            shadowing_depth_db: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RtiSection {
    /// Highest reflection order used for imaging. Unset means 2 for
    /// array nodes and 0 for single-antenna nodes.
    pub max_order: Option<usize>,
    pub gamma: f64,
}

impl Default for RtiSection {
    fn default() -> Self {
        Self { max_order: None, gamma: 0.03 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionGrid {
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetsSection {
    /// Explicit target positions; overrides the grid when present.
    pub positions: Option<Vec<[f64; 2]>>,
    /// Grid centered on the room.
    pub grid: PositionGrid,
}

impl Default for TargetsSection {
    fn default() -> Self {
        Self { positions: None, grid: PositionGrid { spacing: 0.5, nx: 9, ny: 7 } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub write_images: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seed: 1, write_images: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    NumNodes,
    NumElements,
    MaxOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub variable: SweepVariable,
    pub values: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSection {
    pub budget: usize,
    pub seed: u64,
    pub alpha_bounds: [f64; 2],
    pub gamma_bounds: [f64; 2],
    /// Also tune the binarization threshold within these bounds.
    pub threshold_bounds: Option<[f64; 2]>,
    pub candidates: usize,
    /// Calibration target positions; unset picks five grid positions.
    pub calibration: Option<Vec<[f64; 2]>>,
}

impl Default for TuneSection {
    fn default() -> Self {
        Self {
            budget: 30,
            seed: 0,
            alpha_bounds: [0.0, 1.0],
            gamma_bounds: [0.005, 0.2],
            threshold_bounds: None,
            candidates: 1024,
            calibration: None,
        }
    }
}

/// Scenario configuration as read from TOML.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub room: RoomSection,
    pub nodes: NodesSection,
    pub grid: GridSection,
    pub waveform: WaveformSpec,
    pub channel: ChannelSection,
    pub beamform: RssConfig,
    pub rti: RtiSection,
    pub elastic_net: ElasticNetConfig,
    pub locate: LocateConfig,
    pub targets: TargetsSection,
    pub run: RunSection,
    pub sweep: Option<SweepSection>,
    pub tune: TuneSection,
    pub protocol: ProtocolConfig,
}

impl Config {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string().trim_end().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn room(&self) -> Result<Room> {
        Room::new(self.room.width, self.room.depth)
    }

    pub fn nodes(&self) -> Result<Vec<NodePlacement>> {
        let room = self.room()?;
        if self.nodes.list.is_empty() {
            if self.nodes.count < 2 {
                return Err(Error::Config(format!("need at least two nodes, got {}", self.nodes.count)));
            }
            return Ok(perimeter_layout(&room, self.nodes.count, self.nodes.inset, self.nodes.elements));
        }
        let center = room.center();
        Ok(self
            .nodes
            .list
            .iter()
            .map(|n| {
                let position = Point2::new(n.x, n.y);
                NodePlacement {
                    id: n.id,
                    position,
                    boresight: n
                        .boresight_deg
                        .map(f64::to_radians)
                        .unwrap_or_else(|| (center - position).azimuth()),
                    num_elements: n.elements.unwrap_or(self.nodes.elements),
                }
            })
            .collect())
    }

    pub fn scene(&self) -> Result<Scene> {
        let room = self.room()?;
        let grid = VoxelGrid::covering(&room, self.grid.voxel_size)?;
        Scene::new(room, self.nodes()?, self.room.antenna_height, grid)
    }

    /// Reflection order used to build the weight matrix.
    pub fn imaging_order(&self) -> Result<usize> {
        let order = match self.rti.max_order {
            Some(o) => o,
            None => {
                let single = self.nodes()?.iter().all(|n| n.num_elements == 1);
                if single {
                    0
                } else {
                    2
                }
            }
        };
        Ok(order.min(self.channel.max_order))
    }

    pub fn target_positions(&self) -> Result<Vec<Point2>> {
        let room = self.room()?;
        let points: Vec<Point2> = match &self.targets.positions {
            Some(list) => list.iter().map(|p| Point2::new(p[0], p[1])).collect(),
            None => {
                let g = self.targets.grid;
                let c = room.center();
                let x0 = c.x - 0.5 * g.spacing * (g.nx as f64 - 1.0);
                let y0 = c.y - 0.5 * g.spacing * (g.ny as f64 - 1.0);
                let mut out = Vec::with_capacity(g.nx * g.ny);
                for iy in 0..g.ny {
                    for ix in 0..g.nx {
                        out.push(Point2::new(x0 + ix as f64 * g.spacing, y0 + iy as f64 * g.spacing));
                    }
                }
                out
            }
        };
        for p in &points {
            if !room.strictly_contains(*p) {
                return Err(Error::Config(format!("target position ({}, {}) is outside the room", p.x, p.y)));
            }
        }
        Ok(points)
    }

    /// Calibration positions for tuning: explicit, or five positions
    /// spread over the target grid.
    pub fn calibration_positions(&self) -> Result<Vec<Point2>> {
        if let Some(list) = &self.tune.calibration {
            return Ok(list.iter().map(|p| Point2::new(p[0], p[1])).collect());
        }
        let all = self.target_positions()?;
        let n = all.len();
        if n <= 5 {
            return Ok(all);
        }
        Ok((0..5).map(|k| all[(2 * k + 1) * n / 10]).collect())
    }

    pub fn penalty(&self) -> Result<f64> {
        Ok(self.locate.penalty.unwrap_or(self.room()?.diagonal()))
    }

    pub fn validate(&self) -> Result<()> {
        self.room()?;
        self.waveform.validate()?;
        self.elastic_net.validate()?;
        self.locate.validate()?;
        self.protocol.validate()?;
        if self.channel.max_order > 2 {
            return Err(Error::Config(format!("channel.max_order must be at most 2, got {}", self.channel.max_order)));
        }
        if let Some(o) = self.rti.max_order {
            if o > 2 {
                return Err(Error::Config(format!("rti.max_order must be at most 2, got {o}")));
            }
        }
        if !(self.rti.gamma > 0.0) {
            return Err(Error::Config(format!("rti.gamma must be positive, got {}", self.rti.gamma)));
        }
        if !(self.channel.target_radius > 0.0) {
            return Err(Error::Config("channel.target_radius must be positive".into()));
        }
        if self.channel.shadowing_depth_db.is_nan() || self.channel.shadowing_depth_db < 0.0 {
            return Err(Error::Config("channel.shadowing_depth_db must be non-negative".into()));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() || s.values.iter().any(|&v| v == 0 && s.variable != SweepVariable::MaxOrder) {
                return Err(Error::Config("sweep.values must be nonempty positive integers".into()));
            }
        }
        let t = &self.tune;
        for (name, b) in [("alpha_bounds", t.alpha_bounds), ("gamma_bounds", t.gamma_bounds)] {
            if !(b[0] < b[1]) {
                return Err(Error::Config(format!("tune.{name} must have lower < upper")));
            }
        }
        if t.alpha_bounds[0] < 0.0 || t.alpha_bounds[1] > 1.0 || t.gamma_bounds[0] <= 0.0 {
            return Err(Error::Config("tune bounds leave the valid parameter range".into()));
        }
        if let Some(b) = t.threshold_bounds {
            if !(b[0] < b[1] && b[0] > 0.0 && b[1] < 1.0) {
                return Err(Error::Config("tune.threshold_bounds must lie inside (0, 1)".into()));
            }
        }
        self.scene()?;
        self.target_positions()?;
        Ok(())
    }

    /// Applies a sweep value.
    pub fn with_sweep_value(&self, variable: SweepVariable, value: usize) -> Config {
        let mut c = self.clone();
        match variable {
            SweepVariable::NumNodes => {
                c.nodes.count = value;
                c.nodes.list.clear();
            }
            SweepVariable::NumElements => {
                c.nodes.elements = value;
                c.nodes.list.iter_mut().for_each(|n| n.elements = None);
            }
            SweepVariable::MaxOrder => c.rti.max_order = Some(value),
        }
        c
    }
}
