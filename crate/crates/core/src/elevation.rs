//! Base-centered 2.5D elevation map and step-height traversability.

use std::collections::VecDeque;

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::scene::{BoxOccluder, Scene};

pub const MAP_SIZE: usize = 128;
pub const MAP_RESOLUTION: f64 = 0.06;
pub const DEFAULT_H_STEP: f64 = 0.15;

/// Clearance above a cell's surface used for the line-of-sight test.
const SIGHT_LIFT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct ElevationMap {
    /// World (x, y) of the map center (the robot base).
    pub center: [f64; 2],
    pub resolution: f64,
    pub size: usize,
    /// Row-major (`j * size + i`, `i` along world x); `None` marks unknown cells.
    pub heights: Vec<Option<f64>>,
}

impl ElevationMap {
    /// Lower corner; the base lies on the center of cell `(size / 2, size / 2)`.
    pub fn origin(&self) -> [f64; 2] {
        let half = (self.size / 2) as f64 * self.resolution + self.resolution / 2.0;
        [self.center[0] - half, self.center[1] - half]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.size + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        let o = self.origin();
        [
            o[0] + (i as f64 + 0.5) * self.resolution,
            o[1] + (j as f64 + 0.5) * self.resolution,
        ]
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let o = self.origin();
        let gx = ((x - o[0]) / self.resolution).floor();
        let gy = ((y - o[1]) / self.resolution).floor();
        let n = self.size as f64;
        (gx >= 0.0 && gy >= 0.0 && gx < n && gy < n).then_some((gx as usize, gy as usize))
    }

    pub fn height(&self, i: usize, j: usize) -> Option<f64> {
        self.heights[self.index(i, j)]
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.height(i, j).is_some()
    }

    pub fn valid_count(&self) -> usize {
        self.heights.iter().filter(|h| h.is_some()).count()
    }
}

/// Whether the axis-aligned square cell overlaps the box footprint
/// (separating-axis test in the plane).
fn footprint_overlaps(b: &BoxOccluder, cx: f64, cy: f64, half_cell: f64) -> bool {
    let (s, c) = b.yaw.sin_cos();
    let d = Vector2::new(cx - b.center[0], cy - b.center[1]);
    let axes = [Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0), Vector2::new(c, s), Vector2::new(-s, c)];
    let bx = Vector2::new(c, s) * b.half[0];
    let by = Vector2::new(-s, c) * b.half[1];
    axes.iter().all(|a| {
        let r_box = bx.dot(a).abs() + by.dot(a).abs();
        let r_cell = half_cell * (a.x.abs() + a.y.abs());
        d.dot(a).abs() <= r_box + r_cell
    })
}

/// Build the elevation map around `base`. Heights combine terrain, obstacle
/// tops and target vertices within each cell; a cell is valid when the point
/// just above its surface is in line of sight from `visibility_source`, or
/// it is the base cell.
pub fn build_elevation_map(scene: &Scene, base: &Pose, visibility_source: &Pose) -> ElevationMap {
    build_elevation_map_sized(scene, base, visibility_source, MAP_SIZE, MAP_RESOLUTION)
}

pub fn build_elevation_map_sized(
    scene: &Scene,
    base: &Pose,
    visibility_source: &Pose,
    size: usize,
    resolution: f64,
) -> ElevationMap {
    let mut map = ElevationMap {
        center: [base.translation.x, base.translation.y],
        resolution,
        size,
        heights: vec![None; size * size],
    };
    let half = resolution / 2.0;
    let o = map.origin();

    // target vertices binned per cell
    let mut target_max: Vec<f64> = vec![f64::NEG_INFINITY; size * size];
    for v in &scene.target.vertices {
        if let Some((i, j)) = map.cell_of(v.x, v.y) {
            let k = map.index(i, j);
            target_max[k] = target_max[k].max(v.z);
        }
    }

    let eye = visibility_source.translation;
    let world = scene.world();
    // the robot stands on its own cell, so that cell is known without sight
    let base_cell = map.cell_of(map.center[0], map.center[1]).map(|(i, j)| map.index(i, j));
    let heights: Vec<Option<f64>> = (0..size * size)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k % size, k / size);
            let cx = o[0] + (i as f64 + 0.5) * resolution;
            let cy = o[1] + (j as f64 + 0.5) * resolution;
            let mut h = scene.terrain.max_height_in(cx, cy, half)?;
            for b in &scene.occluders {
                if footprint_overlaps(b, cx, cy, half) {
                    h = h.max(b.top_z());
                }
            }
            h = h.max(target_max[k]);
            let p = Vector3::new(cx, cy, h + SIGHT_LIFT);
            (Some(k) == base_cell || !world.segment_blocked(&eye, &p, |_, _| true)).then_some(h)
        })
        .collect();
    map.heights = heights;
    map
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraversableSet {
    /// Cell indices `(i, j)`, ascending in row-major order.
    pub cells: Vec<(usize, usize)>,
    /// World `(x, y, z_surface)` of each cell center.
    pub points: Vec<Vector3<f64>>,
}

impl TraversableSet {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.cells.binary_search_by(|&(a, b)| (b, a).cmp(&(j, i))).is_ok()
    }
}

/// Connected component of valid cells reachable from the base cell through
/// 4-neighbor steps of at most `h_step`. The base cell must be valid and its
/// surface within `h_step` of `base_z - standing height`.
pub fn traversable_cells(map: &ElevationMap, h_step: f64, base_z: f64, standing_height: f64) -> Result<TraversableSet> {
    let c = map.center;
    let (bi, bj) = map.cell_of(c[0], c[1]).ok_or(Error::BaseCellInvalid)?;
    let hb = map.height(bi, bj).ok_or(Error::BaseCellInvalid)?;
    if (hb - (base_z - standing_height)).abs() > h_step {
        return Err(Error::BaseCellInvalid);
    }
    let n = map.size;
    let mut seen = vec![false; n * n];
    let mut queue = VecDeque::from([(bi, bj)]);
    seen[map.index(bi, bj)] = true;
    while let Some((i, j)) = queue.pop_front() {
        let h = map.height(i, j).expect("only valid cells are queued");
        let nbrs = [
            (i.wrapping_sub(1), j),
            (i + 1, j),
            (i, j.wrapping_sub(1)),
            (i, j + 1),
        ];
        for (a, b) in nbrs {
            if a >= n || b >= n || seen[map.index(a, b)] {
                continue;
            }
            if let Some(hn) = map.height(a, b) {
                if (hn - h).abs() <= h_step {
                    seen[map.index(a, b)] = true;
                    queue.push_back((a, b));
                }
            }
        }
    }
    let mut cells = Vec::new();
    let mut points = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if seen[map.index(i, j)] {
                let [x, y] = map.cell_center(i, j);
                cells.push((i, j));
                points.push(Vector3::new(x, y, map.height(i, j).unwrap()));
            }
        }
    }
    Ok(TraversableSet { cells, points })
}
