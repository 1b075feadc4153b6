//! Scene description and specular pathway enumeration.
//!
//! The scene is a 2-D axis-aligned rectangular room with four walls. Nodes
//! carry uniform linear arrays whose broadside points along `boresight`.
//! Pathways between two nodes are found with the image method: the
//! transmitter is mirrored across an ordered sequence of walls and the
//! straight line from the final image to the receiver is back-projected to
//! recover the reflection points.

use std::f64::consts::PI;
use std::io::Write;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Tolerance used when deciding whether a reflection point lies on a wall.
const ON_WALL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    /// Azimuth of this vector, radians in (-pi, pi].
    pub fn azimuth(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Distance from `point` to the closed segment `a`-`b`.
pub fn point_segment_distance(point: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return point.distance(a);
    }
    let t = ((point - a).dot(ab) / len2).clamp(0.0, 1.0);
    point.distance(a + ab * t)
}

/// Which coordinate a wall pins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WallLine {
    /// The wall lies on `x = c`.
    X(f64),
    /// The wall lies on `y = c`.
    Y(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wall {
    pub index: usize,
    pub start: Point2,
    pub end: Point2,
    pub line: WallLine,
}

impl Wall {
    /// Mirror image of `p` across the wall's supporting line.
    pub fn mirror(&self, p: Point2) -> Point2 {
        match self.line {
            WallLine::X(c) => Point2::new(2.0 * c - p.x, p.y),
            WallLine::Y(c) => Point2::new(p.x, 2.0 * c - p.y),
        }
    }

    /// Unit normal of the wall line (sign is irrelevant for reflection).
    pub fn normal(&self) -> Point2 {
        match self.line {
            WallLine::X(_) => Point2::new(1.0, 0.0),
            WallLine::Y(_) => Point2::new(0.0, 1.0),
        }
    }

    /// Intersection of the line `from`-`to` with the wall line, as the
    /// parameter `t` along `from -> to` and the point itself.
    fn intersect(&self, from: Point2, to: Point2) -> Option<(f64, Point2)> {
        let d = to - from;
        let t = match self.line {
            WallLine::X(c) => {
                if d.x == 0.0 {
                    return None;
                }
                (c - from.x) / d.x
            }
            WallLine::Y(c) => {
                if d.y == 0.0 {
                    return None;
                }
                (c - from.y) / d.y
            }
        };
        let mut p = from + d * t;
        // Snap exactly onto the wall line.
        match self.line {
            WallLine::X(c) => p.x = c,
            WallLine::Y(c) => p.y = c,
        }
        Some((t, p))
    }

    fn contains(&self, p: Point2) -> bool {
        let (lo_x, hi_x) = (self.start.x.min(self.end.x), self.start.x.max(self.end.x));
        let (lo_y, hi_y) = (self.start.y.min(self.end.y), self.start.y.max(self.end.y));
        p.x >= lo_x - ON_WALL_TOLERANCE
            && p.x <= hi_x + ON_WALL_TOLERANCE
            && p.y >= lo_y - ON_WALL_TOLERANCE
            && p.y <= hi_y + ON_WALL_TOLERANCE
    }
}

/// Axis-aligned rectangular room with its lower-left corner at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub width: f64,
    pub depth: f64,
}

impl Room {
    pub fn new(width: f64, depth: f64) -> Result<Self> {
        if !(width > 0.0 && depth > 0.0 && width.is_finite() && depth.is_finite()) {
            return Err(Error::Config(format!(
                "room dimensions must be positive, got {width} x {depth}"
            )));
        }
        Ok(Self { width, depth })
    }

    /// Walls in fixed order: x = 0, x = width, y = 0, y = depth.
    pub fn walls(&self) -> [Wall; 4] {
        let (w, d) = (self.width, self.depth);
        [
            Wall {
                index: 0,
                start: Point2::new(0.0, 0.0),
                end: Point2::new(0.0, d),
                line: WallLine::X(0.0),
            },
            Wall {
                index: 1,
                start: Point2::new(w, 0.0),
                end: Point2::new(w, d),
                line: WallLine::X(w),
            },
            Wall {
                index: 2,
                start: Point2::new(0.0, 0.0),
                end: Point2::new(w, 0.0),
                line: WallLine::Y(0.0),
            },
            Wall {
                index: 3,
                start: Point2::new(0.0, d),
                end: Point2::new(w, d),
                line: WallLine::Y(d),
            },
        ]
    }

    pub fn strictly_contains(&self, p: Point2) -> bool {
        p.x > 0.0 && p.x < self.width && p.y > 0.0 && p.y < self.depth
    }

    pub fn diagonal(&self) -> f64 {
        self.width.hypot(self.depth)
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.width / 2.0, self.depth / 2.0)
    }
}

/// Regular voxel grid. Voxel `v = iy * nx + ix` has its center at
/// `origin + ((ix + 0.5) * size, (iy + 0.5) * size)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub origin: Point2,
    pub voxel_size: f64,
    pub nx: usize,
    pub ny: usize,
}

impl VoxelGrid {
    pub fn new(origin: Point2, voxel_size: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::Config(format!("voxel size must be positive, got {voxel_size}")));
        }
        if nx == 0 || ny == 0 {
            return Err(Error::Config("voxel grid must have at least one voxel".into()));
        }
        Ok(Self { origin, voxel_size, nx, ny })
    }

    /// Grid tiling the room from the origin with the given voxel size.
    pub fn covering(room: &Room, voxel_size: f64) -> Result<Self> {
        if !(voxel_size > 0.0) {
            return Err(Error::Config(format!("voxel size must be positive, got {voxel_size}")));
        }
        let nx = ((room.width / voxel_size).round() as usize).max(1);
        let ny = ((room.depth / voxel_size).round() as usize).max(1);
        Self::new(Point2::default(), voxel_size, nx, ny)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn center(&self, v: usize) -> Point2 {
        let ix = v % self.nx;
        let iy = v / self.nx;
        self.center_of(ix, iy)
    }

    pub fn center_of(&self, ix: usize, iy: usize) -> Point2 {
        Point2::new(
            self.origin.x + (ix as f64 + 0.5) * self.voxel_size,
            self.origin.y + (iy as f64 + 0.5) * self.voxel_size,
        )
    }

    /// Inclusive voxel index ranges whose centers may fall in the box.
    pub fn index_range(&self, min: Point2, max: Point2) -> Option<((usize, usize), (usize, usize))> {
        let s = self.voxel_size;
        let lo_x = ((min.x - self.origin.x) / s - 0.5).ceil().max(0.0);
        let hi_x = ((max.x - self.origin.x) / s - 0.5).floor();
        let lo_y = ((min.y - self.origin.y) / s - 0.5).ceil().max(0.0);
        let hi_y = ((max.y - self.origin.y) / s - 0.5).floor();
        if hi_x < 0.0 || hi_y < 0.0 || lo_x > hi_x || lo_y > hi_y {
            return None;
        }
        let hi_x = (hi_x as usize).min(self.nx - 1);
        let hi_y = (hi_y as usize).min(self.ny - 1);
        let (lo_x, lo_y) = (lo_x as usize, lo_y as usize);
        if lo_x > hi_x || lo_y > hi_y {
            return None;
        }
        Some(((lo_x, hi_x), (lo_y, hi_y)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePlacement {
    pub id: u32,
    pub position: Point2,
    /// Array broadside azimuth, radians.
    pub boresight: f64,
    pub num_elements: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub room: Room,
    pub nodes: Vec<NodePlacement>,
    /// Informational only; all pathway math is 2-D.
    pub antenna_height: f64,
    pub voxel_grid: VoxelGrid,
}

impl Scene {
    pub fn new(
        room: Room,
        nodes: Vec<NodePlacement>,
        antenna_height: f64,
        voxel_grid: VoxelGrid,
    ) -> Result<Self> {
        Room::new(room.width, room.depth)?;
        let mut ids: Vec<u32> = nodes.iter().map(|n| n.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("node ids must be unique".into()));
        }
        for node in &nodes {
            if node.num_elements == 0 {
                return Err(Error::Config(format!("node {} has no antenna elements", node.id)));
            }
            if !room.strictly_contains(node.position) {
                return Err(Error::Config(format!(
                    "node {} at ({}, {}) is not strictly inside the room",
                    node.id, node.position.x, node.position.y
                )));
            }
        }
        if voxel_grid.is_empty() {
            return Err(Error::Config("voxel grid is empty".into()));
        }
        Ok(Self { room, nodes, antenna_height, voxel_grid })
    }

    pub fn node(&self, id: u32) -> Option<&NodePlacement> {
        self.nodes.iter().find(|n| n.id == id)
    }
}

/// Nodes spread around a rectangle inset from the walls, arrays facing the
/// room center. Counts that are multiples of four put `count / 4` nodes on
/// each side at fractions `(j + 0.5) / (count / 4)` of its length, so four
/// nodes sit at the side midpoints; other counts are spaced evenly along
/// the perimeter, half a spacing from the first corner. Ids run 1..=count.
pub fn perimeter_layout(room: &Room, count: usize, inset: f64, num_elements: usize) -> Vec<NodePlacement> {
    let (x0, y0) = (inset, inset);
    let (x1, y1) = (room.width - inset, room.depth - inset);
    let (w, d) = (x1 - x0, y1 - y0);
    let perimeter = 2.0 * (w + d);
    let point_at = |s: f64| -> Point2 {
        let s = s.rem_euclid(perimeter);
        if s < w {
            Point2::new(x0 + s, y0)
        } else if s < w + d {
            Point2::new(x1, y0 + (s - w))
        } else if s < 2.0 * w + d {
            Point2::new(x1 - (s - w - d), y1)
        } else {
            Point2::new(x0, y1 - (s - 2.0 * w - d))
        }
    };
    let positions: Vec<Point2> = if count > 0 && count.is_multiple_of(4) {
        let per_side = count / 4;
        let mut out = Vec::with_capacity(count);
        let corners = [0.0, w, w + d, 2.0 * w + d];
        let lengths = [w, d, w, d];
        for (corner, len) in corners.iter().zip(lengths) {
            for k in 0..per_side {
                out.push(point_at(corner + len * (k as f64 + 0.5) / per_side as f64));
            }
        }
        out
    } else {
        (0..count).map(|k| point_at(perimeter * (k as f64 + 0.5) / count as f64)).collect()
    };
    let center = room.center();
    positions
        .into_iter()
        .enumerate()
        .map(|(i, p)| NodePlacement {
            id: i as u32 + 1,
            position: p,
            boresight: (center - p).azimuth(),
            num_elements,
        })
        .collect()
}

/// One unordered node pair; `tx` has the lower id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub index: usize,
    pub tx: u32,
    pub rx: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkTopology {
    pub links: Vec<Link>,
}

impl LinkTopology {
    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }
}

/// All unordered node pairs: (1,2), (1,3), ..., (2,3), ... by ascending id.
pub fn enumerate_links(scene: &Scene) -> Result<LinkTopology> {
    if scene.nodes.len() < 2 {
        return Err(Error::Config(format!(
            "at least two nodes are needed to form a link, got {}",
            scene.nodes.len()
        )));
    }
    let mut ids: Vec<u32> = scene.nodes.iter().map(|n| n.id).collect();
    ids.sort_unstable();
    let mut links = Vec::with_capacity(ids.len() * (ids.len() - 1) / 2);
    for (i, &a) in ids.iter().enumerate() {
        for &b in &ids[i + 1..] {
            links.push(Link { index: links.len(), tx: a, rx: b });
        }
    }
    Ok(LinkTopology { links })
}

/// A single specular propagation path.
#[derive(Debug, Clone, PartialEq)]
pub struct Pathway {
    pub link_index: usize,
    pub path_index: usize,
    pub source: Point2,
    pub destination: Point2,
    /// Walls hit, in travel order.
    pub walls: Vec<usize>,
    pub reflection_points: Vec<Point2>,
    pub segment_lengths: Vec<f64>,
    pub total_distance: f64,
    /// Seconds.
    pub delay: f64,
    /// Angle of departure relative to the transmit array boresight, radians.
    pub aod: f64,
    /// Angle of arrival relative to the receive array boresight, radians.
    pub aoa: f64,
}

impl Pathway {
    pub fn order(&self) -> usize {
        self.reflection_points.len()
    }

    /// Source, reflection points, destination.
    pub fn anchors(&self) -> Vec<Point2> {
        let mut a = Vec::with_capacity(self.reflection_points.len() + 2);
        a.push(self.source);
        a.extend_from_slice(&self.reflection_points);
        a.push(self.destination);
        a
    }

    /// Segments as anchor pairs.
    pub fn segments(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let anchors = self.anchors();
        (0..anchors.len() - 1).map(move |k| (anchors[k], anchors[k + 1]))
    }
}

/// Traces the pathways of `link` in the scene.
pub fn trace_pathways(scene: &Scene, link: &Link, max_order: usize) -> Result<Vec<Pathway>> {
    let tx = scene
        .node(link.tx)
        .ok_or_else(|| Error::Config(format!("link references unknown node {}", link.tx)))?;
    let rx = scene
        .node(link.rx)
        .ok_or_else(|| Error::Config(format!("link references unknown node {}", link.rx)))?;
    trace_between(&scene.room, tx, rx, link.index, max_order)
}

/// Image-method tracing between two nodes. Ordering is LoS, then
/// first-order by wall index, then second-order by wall-index pair.
pub fn trace_between(
    room: &Room,
    tx: &NodePlacement,
    rx: &NodePlacement,
    link_index: usize,
    max_order: usize,
) -> Result<Vec<Pathway>> {
    if max_order > 2 {
        return Err(Error::Config(format!("reflection order must be 0, 1 or 2, got {max_order}")));
    }
    if tx.position.distance(rx.position) < 1e-12 {
        return Err(Error::Geometry(format!(
            "nodes {} and {} are coincident",
            tx.id, rx.id
        )));
    }
    if !room.strictly_contains(tx.position) || !room.strictly_contains(rx.position) {
        return Err(Error::Geometry("both nodes must lie inside the room".into()));
    }

    let walls = room.walls();
    let mut sequences: Vec<Vec<usize>> = vec![vec![]];
    if max_order >= 1 {
        sequences.extend((0..4).map(|w| vec![w]));
    }
    if max_order >= 2 {
        for a in 0..4 {
            for b in 0..4 {
                if a != b {
                    sequences.push(vec![a, b]);
                }
            }
        }
    }

    let mut out = Vec::new();
    for seq in sequences {
        let Some(points) = reflection_points(&walls, &seq, tx.position, rx.position) else {
            continue;
        };
        let mut anchors = Vec::with_capacity(points.len() + 2);
        anchors.push(tx.position);
        anchors.extend_from_slice(&points);
        anchors.push(rx.position);
        let segment_lengths: Vec<f64> = anchors.windows(2).map(|w| w[0].distance(w[1])).collect();
        if segment_lengths.iter().any(|&l| l < 1e-12) {
            continue;
        }
        let total_distance: f64 = segment_lengths.iter().sum();
        let departure = (anchors[1] - anchors[0]).azimuth();
        let arrival = (anchors[anchors.len() - 2] - rx.position).azimuth();
        out.push(Pathway {
            link_index,
            path_index: out.len(),
            source: tx.position,
            destination: rx.position,
            walls: seq,
            reflection_points: points,
            segment_lengths,
            total_distance,
            delay: total_distance / SPEED_OF_LIGHT,
            aod: wrap_angle(departure - tx.boresight),
            aoa: wrap_angle(arrival - rx.boresight),
        });
    }
    Ok(out)
}

/// Reflection points for a wall sequence, or `None` if the image path
/// misses one of the finite wall segments.
fn reflection_points(walls: &[Wall; 4], seq: &[usize], tx: Point2, rx: Point2) -> Option<Vec<Point2>> {
    if seq.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    let mut images = Vec::with_capacity(seq.len() + 1);
    images.push(tx);
    for &w in seq {
        let prev = *images.last().unwrap();
        images.push(walls[w].mirror(prev));
    }
    let mut points = vec![Point2::default(); seq.len()];
    let mut target = rx;
    for k in (0..seq.len()).rev() {
        let wall = &walls[seq[k]];
        let (t, p) = wall.intersect(images[k + 1], target)?;
        if !(t > 1e-12 && t < 1.0 - 1e-12) || !wall.contains(p) {
            return None;
        }
        points[k] = p;
        target = p;
    }
    Some(points)
}

/// For each segment of `path`, the detour sum `|v - start| + |v - end|`.
pub fn pathway_geometry_distances(path: &Pathway, voxel_center: Point2) -> Vec<f64> {
    path.segments()
        .map(|(a, b)| voxel_center.distance(a) + voxel_center.distance(b))
        .collect()
}

/// Writes pathways as CSV rows.
///
/// Columns: `link,index,order,delay_ns,aod_deg,aoa_deg,distance_m,reflection_points`
/// where reflection points are `x:y` pairs joined by `;`.
pub fn write_pathways_csv<W: Write>(writer: W, paths: &[Pathway]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record([
        "link",
        "index",
        "order",
        "delay_ns",
        "aod_deg",
        "aoa_deg",
        "distance_m",
        "reflection_points",
    ])?;
    for p in paths {
        let points = p
            .reflection_points
            .iter()
            .map(|q| format!("{}:{}", q.x, q.y))
            .collect::<Vec<_>>()
            .join(";");
        csv.write_record([
            p.link_index.to_string(),
            p.path_index.to_string(),
            p.order().to_string(),
            (p.delay * 1e9).to_string(),
            p.aod.to_degrees().to_string(),
            p.aoa.to_degrees().to_string(),
            p.total_distance.to_string(),
            points,
        ])?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: u32, x: f64, y: f64) -> NodePlacement {
        NodePlacement { id, position: Point2::new(x, y), boresight: 0.0, num_elements: 1 }
    }

    fn scene_with(nodes: Vec<NodePlacement>) -> Scene {
        let room = Room::new(7.04, 6.31).unwrap();
        let grid = VoxelGrid::covering(&room, 0.1).unwrap();
        Scene::new(room, nodes, 1.3, grid).unwrap()
    }

    #[test]
    fn link_counts() {
        for (n, expected) in [(2, 1), (4, 6), (12, 66)] {
            let room = Room::new(7.04, 6.31).unwrap();
            let nodes = perimeter_layout(&room, n, 0.5, 1);
            let scene = scene_with(nodes);
            assert_eq!(enumerate_links(&scene).unwrap().len(), expected);
        }
    }

    #[test]
    fn link_order_pairs_node_one_first() {
        let scene = scene_with(vec![node(3, 1.0, 1.0), node(1, 2.0, 1.0), node(4, 3.0, 3.0), node(2, 5.0, 5.0)]);
        let pairs: Vec<(u32, u32)> = enumerate_links(&scene).unwrap().links.iter().map(|l| (l.tx, l.rx)).collect();
        assert_eq!(pairs, vec![(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)]);
    }

    #[test]
    fn single_node_is_config_error() {
        let scene = scene_with(vec![node(1, 1.0, 1.0)]);
        assert!(matches!(enumerate_links(&scene), Err(Error::Config(_))));
    }

    #[test]
    fn first_order_off_west_wall() {
        let room = Room::new(7.04, 6.31).unwrap();
        let paths = trace_between(&room, &node(1, 1.0, 1.0), &node(2, 3.0, 1.0), 0, 1).unwrap();
        let west = paths.iter().find(|p| p.walls == vec![0]).unwrap();
        assert_eq!(west.reflection_points.len(), 1);
        assert!(west.reflection_points[0].distance(Point2::new(0.0, 1.0)) < 1e-12);
        assert!((west.total_distance - 4.0).abs() < 1e-12);
        assert!((room.walls()[0].mirror(Point2::new(1.0, 1.0)).x + 1.0).abs() < 1e-15);
    }

    #[test]
    fn order_zero_is_only_los() {
        let room = Room::new(7.04, 6.31).unwrap();
        let paths = trace_between(&room, &node(1, 1.0, 1.0), &node(2, 3.0, 2.0), 0, 0).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].order(), 0);
        assert!((paths[0].delay - paths[0].total_distance / SPEED_OF_LIGHT).abs() < 1e-20);
    }

    #[test]
    fn los_first_and_unique() {
        let room = Room::new(7.04, 6.31).unwrap();
        let paths = trace_between(&room, &node(1, 0.5, 0.7), &node(2, 6.1, 5.2), 3, 2).unwrap();
        assert_eq!(paths[0].order(), 0);
        assert_eq!(paths.iter().filter(|p| p.order() == 0).count(), 1);
        assert!(paths.iter().all(|p| p.link_index == 3));
        for (i, p) in paths.iter().enumerate() {
            assert_eq!(p.path_index, i);
        }
        // Orders are non-decreasing.
        assert!(paths.windows(2).all(|w| w[0].order() <= w[1].order()));
    }

    #[test]
    fn coincident_nodes_are_geometry_error() {
        let room = Room::new(7.04, 6.31).unwrap();
        let r = trace_between(&room, &node(1, 1.0, 1.0), &node(2, 1.0, 1.0), 0, 2);
        assert!(matches!(r, Err(Error::Geometry(_))));
    }

    #[test]
    fn order_above_two_rejected() {
        let room = Room::new(7.04, 6.31).unwrap();
        assert!(trace_between(&room, &node(1, 1.0, 1.0), &node(2, 2.0, 1.0), 0, 3).is_err());
    }

    #[test]
    fn detour_sums() {
        let room = Room::new(7.04, 6.31).unwrap();
        let paths = trace_between(&room, &node(1, 1.0, 1.0), &node(2, 5.0, 1.0), 0, 0).unwrap();
        let los = &paths[0];
        assert!((pathway_geometry_distances(los, Point2::new(3.0, 1.0))[0] - 4.0).abs() < 1e-12);
        assert!((pathway_geometry_distances(los, Point2::new(1.0, 1.0))[0] - 4.0).abs() < 1e-12);

        let paths = trace_between(&room, &node(1, 1.0, 1.0), &node(2, 3.0, 1.0), 0, 1).unwrap();
        let west = paths.iter().find(|p| p.walls == vec![0]).unwrap();
        let sums = pathway_geometry_distances(west, west.source);
        assert_eq!(sums.len(), 2);
        assert!((sums[0] - west.segment_lengths[0]).abs() < 1e-12);
    }

    #[test]
    fn angles_relative_to_boresight() {
        let room = Room::new(7.04, 6.31).unwrap();
        let mut a = node(1, 1.0, 1.0);
        let mut b = node(2, 3.0, 1.0);
        a.boresight = 0.0;
        b.boresight = PI;
        let paths = trace_between(&room, &a, &b, 0, 0).unwrap();
        assert!(paths[0].aod.abs() < 1e-12);
        assert!(paths[0].aoa.abs() < 1e-12);
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn perimeter_layout_midpoints_and_facing() {
        let room = Room::new(7.04, 6.31).unwrap();
        let nodes = perimeter_layout(&room, 4, 1.0, 8);
        let pos: Vec<Point2> = nodes.iter().map(|n| n.position).collect();
        let expect = [(3.52, 1.0), (6.04, 3.155), (3.52, 5.31), (1.0, 3.155)];
        for (p, (x, y)) in pos.iter().zip(expect) {
            assert!(p.distance(Point2::new(x, y)) < 1e-12, "{p:?}");
        }
        let eight = perimeter_layout(&room, 8, 1.0, 1);
        assert!(eight[0].position.distance(Point2::new(2.26, 1.0)) < 1e-12);
        assert!(eight[1].position.distance(Point2::new(4.78, 1.0)) < 1e-12);
        for n in &nodes {
            let to_center = (room.center() - n.position).azimuth();
            assert!(wrap_angle(n.boresight - to_center).abs() < 1e-12);
            assert!(room.strictly_contains(n.position));
        }
        assert_eq!(perimeter_layout(&room, 12, 0.5, 1).len(), 12);
        assert_eq!(perimeter_layout(&room, 5, 0.5, 1).len(), 5);
    }

    #[test]
    fn voxel_grid_centers_and_ranges() {
        let room = Room::new(7.04, 6.31).unwrap();
        let g = VoxelGrid::covering(&room, 0.1).unwrap();
        assert_eq!((g.nx, g.ny), (70, 63));
        assert!(g.center(0).distance(Point2::new(0.05, 0.05)) < 1e-12);
        assert!(g.center(71).distance(Point2::new(0.15, 0.15)) < 1e-12);
        let ((lx, hx), (ly, hy)) = g.index_range(Point2::new(0.0, 0.0), Point2::new(0.26, 0.1)).unwrap();
        assert_eq!((lx, hx, ly, hy), (0, 2, 0, 0));
        assert!(g.index_range(Point2::new(-2.0, -2.0), Point2::new(-1.0, -1.0)).is_none());
    }

    #[test]
    fn scene_validation() {
        let room = Room::new(7.04, 6.31).unwrap();
        let grid = VoxelGrid::covering(&room, 0.1).unwrap();
        assert!(Scene::new(room, vec![node(1, 0.0, 1.0)], 1.3, grid).is_err());
        assert!(Scene::new(room, vec![node(1, 1.0, 1.0), node(1, 2.0, 1.0)], 1.3, grid).is_err());
        assert!(Room::new(0.0, 1.0).is_err());
        assert!(VoxelGrid::new(Point2::default(), 0.0, 1, 1).is_err());
    }

    #[test]
    fn pathway_csv_has_header_and_rows() {
        let room = Room::new(7.04, 6.31).unwrap();
        let paths = trace_between(&room, &node(1, 1.0, 1.0), &node(2, 3.0, 1.0), 0, 2).unwrap();
        let mut buf = Vec::new();
        write_pathways_csv(&mut buf, &paths).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("link,index,order,delay_ns,aod_deg,aoa_deg,distance_m,reflection_points\n"));
        assert_eq!(text.lines().count(), paths.len() + 1);
    }
}
