use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{LabeledMesh, PartLabel};
use crate::geometry::{Bvh, Hit, Ray, Triangle};

type V3 = Vector3<f64>;

/// Heightfield over a regular grid of vertex heights. Each cell is split
/// along its (0,0)-(1,1) diagonal, so `height_at` agrees exactly with the
/// triangles handed to the ray caster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Terrain {
    pub origin: [f64; 2],
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major `(ny + 1) x (nx + 1)` vertex heights.
    pub heights: Vec<f64>,
}

impl Terrain {
    pub fn flat(min: f64, max: f64, z: f64) -> Self {
        Self {
            origin: [min, min],
            cell: max - min,
            nx: 1,
            ny: 1,
            heights: vec![z; 4],
        }
    }

    fn vertex(&self, i: usize, j: usize) -> V3 {
        V3::new(
            self.origin[0] + i as f64 * self.cell,
            self.origin[1] + j as f64 * self.cell,
            self.heights[j * (self.nx + 1) + i],
        )
    }

    pub fn extent(&self) -> ([f64; 2], [f64; 2]) {
        (
            self.origin,
            [
                self.origin[0] + self.nx as f64 * self.cell,
                self.origin[1] + self.ny as f64 * self.cell,
            ],
        )
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        let (lo, hi) = self.extent();
        x >= lo[0] && x <= hi[0] && y >= lo[1] && y <= hi[1]
    }

    pub fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        if !self.contains_xy(x, y) {
            return None;
        }
        let gx = (x - self.origin[0]) / self.cell;
        let gy = (y - self.origin[1]) / self.cell;
        let i = (gx.floor() as usize).min(self.nx - 1);
        let j = (gy.floor() as usize).min(self.ny - 1);
        let (fx, fy) = (gx - i as f64, gy - j as f64);
        let h00 = self.vertex(i, j).z;
        let h10 = self.vertex(i + 1, j).z;
        let h01 = self.vertex(i, j + 1).z;
        let h11 = self.vertex(i + 1, j + 1).z;
        Some(if fx >= fy {
            h00 + fx * (h10 - h00) + fy * (h11 - h10)
        } else {
            h00 + fy * (h01 - h00) + fx * (h11 - h01)
        })
    }

    /// Largest vertex height in the axis-aligned square `[x-r, x+r] x [y-r, y+r]`,
    /// combined with the interpolated heights at its corners.
    pub fn max_height_in(&self, x: f64, y: f64, r: f64) -> Option<f64> {
        let mut best = f64::NEG_INFINITY;
        for (dx, dy) in [(-r, -r), (r, -r), (-r, r), (r, r), (0.0, 0.0)] {
            if let Some(h) = self.height_at(x + dx, y + dy) {
                best = best.max(h);
            }
        }
        let gx0 = ((x - r - self.origin[0]) / self.cell).ceil().max(0.0) as usize;
        let gy0 = ((y - r - self.origin[1]) / self.cell).ceil().max(0.0) as usize;
        let gx1 = ((x + r - self.origin[0]) / self.cell).floor();
        let gy1 = ((y + r - self.origin[1]) / self.cell).floor();
        if gx1 >= 0.0 && gy1 >= 0.0 {
            for j in gy0..=(gy1 as usize).min(self.ny) {
                for i in gx0..=(gx1 as usize).min(self.nx) {
                    best = best.max(self.vertex(i, j).z);
                }
            }
        }
        best.is_finite().then_some(best)
    }

    pub fn triangles(&self) -> Vec<Triangle<SurfaceTag>> {
        let mut out = Vec::with_capacity(self.nx * self.ny * 2);
        for j in 0..self.ny {
            for i in 0..self.nx {
                let (a, b, c, d) = (
                    self.vertex(i, j),
                    self.vertex(i + 1, j),
                    self.vertex(i + 1, j + 1),
                    self.vertex(i, j + 1),
                );
                out.push(Triangle::new(a, b, c, SurfaceTag::Terrain));
                out.push(Triangle::new(a, c, d, SurfaceTag::Terrain));
            }
        }
        out
    }
}

/// Box obstacle rotated by `yaw` about the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxOccluder {
    pub center: [f64; 3],
    pub half: [f64; 3],
    pub yaw: f64,
}

impl BoxOccluder {
    pub fn center(&self) -> V3 {
        V3::from(self.center)
    }

    pub fn half(&self) -> V3 {
        V3::from(self.half)
    }

    fn rotation(&self) -> Matrix3<f64> {
        let (s, c) = self.yaw.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    pub fn to_local(&self, p: &V3) -> V3 {
        self.rotation().transpose() * (p - self.center())
    }

    pub fn volume(&self) -> f64 {
        8.0 * self.half[0] * self.half[1] * self.half[2]
    }

    pub fn top_z(&self) -> f64 {
        self.center[2] + self.half[2]
    }

    pub fn bottom_z(&self) -> f64 {
        self.center[2] - self.half[2]
    }

    /// Strict interior test.
    pub fn contains(&self, p: &V3) -> bool {
        let q = self.to_local(p);
        (0..3).all(|a| q[a].abs() < self.half[a])
    }

    /// Whether the vertical projection of `(x, y)` lies within `margin` of the
    /// box footprint.
    pub fn footprint_contains(&self, x: f64, y: f64, margin: f64) -> bool {
        let q = self.to_local(&V3::new(x, y, self.center[2]));
        q.x.abs() <= self.half[0] + margin && q.y.abs() <= self.half[1] + margin
    }

    /// Euclidean distance from `p` to the box (negative inside).
    pub fn signed_distance(&self, p: &V3) -> f64 {
        let q = self.to_local(p).abs() - self.half();
        let outside = q.map(|v| v.max(0.0)).norm();
        let inside = q.max().min(0.0);
        outside + inside
    }

    pub fn corners(&self) -> [V3; 8] {
        let r = self.rotation();
        let c = self.center();
        let h = self.half();
        let mut out = [V3::zeros(); 8];
        for (k, slot) in out.iter_mut().enumerate() {
            let s = V3::new(
                if k & 1 == 0 { -h.x } else { h.x },
                if k & 2 == 0 { -h.y } else { h.y },
                if k & 4 == 0 { -h.z } else { h.z },
            );
            *slot = c + r * s;
        }
        out
    }

    pub fn triangles(&self, tag: SurfaceTag) -> Vec<Triangle<SurfaceTag>> {
        let v = self.corners();
        // outward-wound quads over the corner indexing above
        const QUADS: [[usize; 4]; 6] = [
            [0, 2, 3, 1],
            [4, 5, 7, 6],
            [0, 1, 5, 4],
            [2, 6, 7, 3],
            [0, 4, 6, 2],
            [1, 3, 7, 5],
        ];
        QUADS
            .iter()
            .flat_map(|q| {
                [
                    Triangle::new(v[q[0]], v[q[1]], v[q[2]], tag),
                    Triangle::new(v[q[0]], v[q[2]], v[q[3]], tag),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceTag {
    Terrain,
    Occluder(u16),
    Target(PartLabel),
}

impl SurfaceTag {
    pub fn is_target(&self) -> bool {
        matches!(self, SurfaceTag::Target(_))
    }
}

/// Ray-castable union of terrain, obstacles and the target mesh.
#[derive(Debug, Clone)]
pub struct World {
    bvh: Bvh<SurfaceTag>,
}

impl World {
    pub fn build(terrain: &Terrain, occluders: &[BoxOccluder], target: &LabeledMesh) -> Self {
        let mut tris = terrain.triangles();
        for (i, b) in occluders.iter().enumerate() {
            tris.extend(b.triangles(SurfaceTag::Occluder(i as u16)));
        }
        for f in &target.faces {
            let [a, b, c] = f.map(|i| i as usize);
            tris.push(Triangle::new(
                target.vertices[a],
                target.vertices[b],
                target.vertices[c],
                SurfaceTag::Target(target.part_of[a]),
            ));
        }
        Self { bvh: Bvh::build(tris) }
    }

    pub fn first_hit(&self, ray: &Ray, t_max: f64) -> Option<Hit<SurfaceTag>> {
        self.bvh.first_hit(ray, t_max, |_, _| true)
    }

    pub fn first_hit_filtered<F>(&self, ray: &Ray, t_max: f64, filter: F) -> Option<Hit<SurfaceTag>>
    where
        F: FnMut(&SurfaceTag, f64) -> bool,
    {
        self.bvh.first_hit(ray, t_max, filter)
    }

    /// Whether the open segment `a -> b` crosses any surface accepted by `filter`.
    pub fn segment_blocked<F>(&self, a: &V3, b: &V3, filter: F) -> bool
    where
        F: FnMut(&SurfaceTag, f64) -> bool,
    {
        self.bvh.occluded(&Ray::between(a, b), 1.0, filter)
    }
}
