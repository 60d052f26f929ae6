use nalgebra::Vector3;

use crate::geometry::{CameraIntrinsics, CameraView};
use crate::scene::Observation;
use crate::viewpoints::CandidateView;

pub const VOXEL_SIZE: f64 = 0.1;
pub const DEFAULT_RAY_BUDGET: usize = 300;
const MAX_GAIN_RANGE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum VoxelState {
    Unknown = 0,
    Free = 1,
    Occupied = 2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub origin: Vector3<f64>,
    pub voxel: f64,
    pub dims: [usize; 3],
    states: Vec<VoxelState>,
}

impl OccupancyGrid {
    pub fn new(origin: Vector3<f64>, voxel: f64, dims: [usize; 3]) -> Self {
        Self {
            origin,
            voxel,
            dims,
            states: vec![VoxelState::Unknown; dims[0] * dims[1] * dims[2]],
        }
    }

    /// Grid spanning `[min, max]` at the default voxel size.
    pub fn covering(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        let dims = [0, 1, 2].map(|a| ((max[a] - min[a]) / VOXEL_SIZE).ceil().max(1.0) as usize);
        Self::new(min, VOXEL_SIZE, dims)
    }

    #[inline]
    fn linear(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    pub fn voxel_of(&self, p: &Vector3<f64>) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let g = ((p[a] - self.origin[a]) / self.voxel).floor();
            if !(g >= 0.0 && g < self.dims[a] as f64) {
                return None;
            }
            out[a] = g as usize;
        }
        Some(out)
    }

    pub fn state(&self, c: [usize; 3]) -> VoxelState {
        self.states[self.linear(c)]
    }

    pub fn count(&self, s: VoxelState) -> usize {
        self.states.iter().filter(|&&v| v == s).count()
    }

    pub fn occupied_set(&self) -> Vec<usize> {
        (0..self.states.len())
            .filter(|&i| self.states[i] == VoxelState::Occupied)
            .collect()
    }

    pub fn fill(&mut self, s: VoxelState) {
        self.states.fill(s);
    }

    pub fn set(&mut self, c: [usize; 3], s: VoxelState) {
        let i = self.linear(c);
        self.states[i] = s;
    }

    /// Voxels pierced by the segment `a -> b` in order, clipped to the grid
    /// (3D DDA). `visit` returns false to stop early.
    pub fn traverse<F: FnMut([usize; 3]) -> bool>(&self, a: &Vector3<f64>, b: &Vector3<f64>, mut visit: F) {
        let d = b - a;
        let len = d.norm();
        if len == 0.0 {
            if let Some(c) = self.voxel_of(a) {
                visit(c);
            }
            return;
        }
        // clip the segment parameter range to the grid box
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for ax in 0..3 {
            let lo = self.origin[ax];
            let hi = lo + self.dims[ax] as f64 * self.voxel;
            if d[ax].abs() < 1e-15 {
                if a[ax] < lo || a[ax] >= hi {
                    return;
                }
            } else {
                let mut ta = (lo - a[ax]) / d[ax];
                let mut tb = (hi - a[ax]) / d[ax];
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
            }
        }
        if t0 > t1 {
            return;
        }
        let start = a + d * t0;
        let mut cell = [0i64; 3];
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for ax in 0..3 {
            let g = ((start[ax] - self.origin[ax]) / self.voxel).floor() as i64;
            cell[ax] = g.clamp(0, self.dims[ax] as i64 - 1);
            if d[ax] > 0.0 {
                step[ax] = 1;
                let boundary = self.origin[ax] + (cell[ax] + 1) as f64 * self.voxel;
                t_max[ax] = (boundary - a[ax]) / d[ax];
                t_delta[ax] = self.voxel / d[ax];
            } else if d[ax] < 0.0 {
                step[ax] = -1;
                let boundary = self.origin[ax] + cell[ax] as f64 * self.voxel;
                t_max[ax] = (boundary - a[ax]) / d[ax];
                t_delta[ax] = -self.voxel / d[ax];
            }
        }
        loop {
            let c = [cell[0] as usize, cell[1] as usize, cell[2] as usize];
            if !visit(c) {
                return;
            }
            let ax = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
                0
            } else if t_max[1] <= t_max[2] {
                1
            } else {
                2
            };
            if t_max[ax] > t1 {
                return;
            }
            cell[ax] += step[ax];
            if cell[ax] < 0 || cell[ax] >= self.dims[ax] as i64 {
                return;
            }
            t_max[ax] += t_delta[ax];
        }
    }
}

/// Carve free space along each camera-to-point ray and mark endpoints
/// occupied. Occupied voxels are never cleared.
pub fn integrate_observation(grid: &mut OccupancyGrid, obs: &Observation) {
    let view = obs.view();
    let eye = view.position;
    let ends: Vec<Vector3<f64>> = obs.cloud.points.iter().map(|p| view.to_world(p)).collect();
    for p in &ends {
        let end = grid.voxel_of(p);
        let mut path = Vec::new();
        grid.traverse(&eye, p, |c| {
            path.push(c);
            true
        });
        for c in path {
            if Some(c) != end && grid.state(c) == VoxelState::Unknown {
                grid.set(c, VoxelState::Free);
            }
        }
    }
    for p in &ends {
        if let Some(c) = grid.voxel_of(p) {
            grid.set(c, VoxelState::Occupied);
        }
    }
}

/// Distinct unknown voxels met before the first occupied voxel along
/// `ray_budget` rays spread evenly over the candidate's image.
pub fn volumetric_gain(cand: &CandidateView, grid: &OccupancyGrid, k: &CameraIntrinsics, ray_budget: usize) -> usize {
    if ray_budget == 0 {
        return 0;
    }
    let view = CameraView::new(&cand.cam);
    let aspect = k.width as f64 / k.height as f64;
    let ny = ((ray_budget as f64 / aspect).sqrt().round() as usize).max(1);
    let nx = (ray_budget / ny).max(1);
    let mut seen = vec![0u64; grid.states.len().div_ceil(64)];
    let mut gain = 0usize;
    for j in 0..ny {
        for i in 0..nx {
            let u = (i as f64 + 0.5) * k.width as f64 / nx as f64;
            let v = (j as f64 + 0.5) * k.height as f64 / ny as f64;
            let d = view.direction_to_world(&k.ray_direction(u, v).normalize());
            let end = view.position + d * MAX_GAIN_RANGE;
            grid.traverse(&view.position, &end, |c| match grid.state(c) {
                VoxelState::Occupied => false,
                VoxelState::Unknown => {
                    let i = grid.linear(c);
                    let bit = 1u64 << (i % 64);
                    if seen[i / 64] & bit == 0 {
                        seen[i / 64] |= bit;
                        gain += 1;
                    }
                    true
                }
                VoxelState::Free => true,
            });
        }
    }
    gain
}
