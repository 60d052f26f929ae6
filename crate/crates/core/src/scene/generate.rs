use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{BoxOccluder, Family, JointAngles, Scene, SurfaceTag, TargetSpec, Terrain};
use crate::error::{Error, Result};
use crate::geometry::{CameraView, Pose};
use crate::rng::{stream, tag};
use crate::viewpoints::{Mount, STANDING_HEIGHT};

/// Horizontal clearance the robot body needs around its base.
pub const ROBOT_RADIUS: f64 = 0.3;

const HALF_EXTENT: f64 = 8.0;
const OUTDOOR_CELL: f64 = 0.4;

/// Knobs of the scene sampler. Defaults depend on the family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationParams {
    pub occluded_band: (f64, f64),
    pub max_attempts: usize,
    pub min_separation: f64,
    pub spawn_distance: (f64, f64),
    pub spawn_alpha: (f64, f64),
    pub target_height: (f64, f64),
    /// Half-width across the line of sight, half-depth along it, full height.
    pub primary_half_width: (f64, f64),
    pub primary_half_depth: (f64, f64),
    pub primary_height: (f64, f64),
    pub distractors: (usize, usize),
    pub distractor_half: (f64, f64),
    pub distractor_height: (f64, f64),
    /// Amplitude range of each terrain undulation; 0 gives flat ground.
    pub roughness: (f64, f64),
}

impl GenerationParams {
    pub fn for_family(family: Family) -> Self {
        let common = GenerationParams {
            occluded_band: (0.2, 0.8),
            max_attempts: 100,
            min_separation: 0.05,
            spawn_distance: (2.5, 3.5),
            spawn_alpha: (-0.25, -0.05),
            target_height: (1.5, 1.9),
            primary_half_width: (0.25, 0.6),
            primary_half_depth: (0.05, 0.2),
            primary_height: (0.5, 1.4),
            distractors: (2, 4),
            distractor_half: (0.1, 0.3),
            distractor_height: (0.3, 0.9),
            roughness: (0.0, 0.0),
        };
        match family {
            Family::Indoor => common,
            Family::Outdoor => GenerationParams {
                primary_half_width: (0.3, 0.75),
                primary_half_depth: (0.15, 0.4),
                primary_height: (0.6, 1.3),
                distractors: (4, 8),
                distractor_half: (0.2, 0.6),
                distractor_height: (0.5, 1.8),
                roughness: (0.02, 0.05),
                ..common
            },
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: (f64, f64)) -> f64 {
    if r.1 > r.0 {
        rng.random_range(r.0..r.1)
    } else {
        r.0
    }
}

fn make_terrain(rng: &mut ChaCha8Rng, p: &GenerationParams) -> Terrain {
    if p.roughness.1 <= 0.0 {
        return Terrain::flat(-HALF_EXTENT, HALF_EXTENT, 0.0);
    }
    let n = (2.0 * HALF_EXTENT / OUTDOOR_CELL).round() as usize;
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let dir = rng.random_range(0.0..2.0 * PI);
            let wavelength = rng.random_range(2.0..6.0);
            let k = 2.0 * PI / wavelength;
            (uniform(rng, p.roughness), k * dir.cos(), k * dir.sin(), rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    let mut heights = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let x = -HALF_EXTENT + i as f64 * OUTDOOR_CELL;
            let y = -HALF_EXTENT + j as f64 * OUTDOOR_CELL;
            let smooth: f64 = waves.iter().map(|&(a, kx, ky, ph)| a * (kx * x + ky * y + ph).sin()).sum();
            heights.push(smooth + rng.random_range(-0.015..0.015));
        }
    }
    Terrain {
        origin: [-HALF_EXTENT, -HALF_EXTENT],
        cell: OUTDOOR_CELL,
        nx: n,
        ny: n,
        heights,
    }
}

/// Box standing on the terrain, slightly sunk so no gap shows underneath.
fn grounded_box(terrain: &Terrain, x: f64, y: f64, half_xy: (f64, f64), height: f64, yaw: f64) -> BoxOccluder {
    let reach = half_xy.0.hypot(half_xy.1);
    let ground = terrain.height_at(x, y).unwrap_or(0.0);
    let top = terrain.max_height_in(x, y, reach).unwrap_or(ground) + height;
    let bottom = ground - 0.2;
    BoxOccluder {
        center: [x, y, 0.5 * (top + bottom)],
        half: [half_xy.0, half_xy.1, 0.5 * (top - bottom)],
        yaw,
    }
}

/// Fraction of target vertices whose segment to the camera crosses terrain or
/// an obstacle.
pub fn occluded_vertex_fraction(scene: &Scene, cam: &Pose) -> f64 {
    let view = CameraView::new(cam);
    let world = scene.world();
    let verts = &scene.target.vertices;
    let blocked = verts
        .par_iter()
        .filter(|v| world.segment_blocked(&view.position, v, |tag, _| !matches!(tag, SurfaceTag::Target(_))))
        .count();
    blocked as f64 / verts.len() as f64
}

fn separation_ok(scene_target: &[Vector3<f64>], b: &BoxOccluder, min_sep: f64) -> bool {
    scene_target.iter().all(|v| b.signed_distance(v) >= min_sep)
}

fn spawn_clear(b: &BoxOccluder, spawn: &Pose, cam: &Vector3<f64>) -> bool {
    let t = spawn.translation;
    !b.footprint_contains(t.x, t.y, ROBOT_RADIUS) && !b.contains(cam)
}

/// Sample a scene of the given family; a pure function of `(family, seed)`.
pub fn generate_scene(family: Family, seed: u64) -> Result<Scene> {
    generate_scene_with(family, seed, &GenerationParams::for_family(family))
}

pub fn generate_scene_with(family: Family, seed: u64, p: &GenerationParams) -> Result<Scene> {
    let mut rng = stream(seed, &[tag::SCENE, family.tag()]);
    let terrain = make_terrain(&mut rng, p);
    let mount = Mount::default();
    let mut last_reason = String::from("no attempts made");

    for _ in 0..p.max_attempts {
        let tx = rng.random_range(-0.5..0.5);
        let ty = rng.random_range(-0.5..0.5);
        let tz = terrain.max_height_in(tx, ty, 0.3).unwrap_or(0.0);
        let target = TargetSpec {
            position: [tx, ty, tz],
            yaw: rng.random_range(-PI..PI),
            height: uniform(&mut rng, p.target_height),
            joint_angles: JointAngles {
                left_shoulder: rng.random_range(0.3..1.4),
                right_shoulder: rng.random_range(0.3..1.4),
                left_elbow: rng.random_range(0.0..1.2),
                right_elbow: rng.random_range(0.0..1.2),
                left_hip: rng.random_range(-0.2..0.5),
                right_hip: rng.random_range(-0.2..0.5),
                left_knee: rng.random_range(0.0..0.6),
                right_knee: rng.random_range(0.0..0.6),
            },
        };
        let bearing = rng.random_range(-PI..PI);
        let dist = uniform(&mut rng, p.spawn_distance);
        let (sx, sy) = (tx + dist * bearing.cos(), ty + dist * bearing.sin());
        let alpha = uniform(&mut rng, p.spawn_alpha);

        // primary obstacle straddles the line of sight
        let frac = rng.random_range(0.35..0.7);
        let lateral = rng.random_range(-0.3..0.3);
        let (dx, dy) = (tx - sx, ty - sy);
        let (px, py) = (-dy / dist, dx / dist);
        let cx = sx + frac * dx + lateral * px;
        let cy = sy + frac * dy + lateral * py;
        let primary = grounded_box(
            &terrain,
            cx,
            cy,
            (uniform(&mut rng, p.primary_half_width), uniform(&mut rng, p.primary_half_depth)),
            uniform(&mut rng, p.primary_height),
            bearing + PI / 2.0 + rng.random_range(-0.3..0.3),
        );

        let n_distract = rng.random_range(p.distractors.0..=p.distractors.1);
        let mut distractors = Vec::with_capacity(n_distract);
        for _ in 0..n_distract {
            let x = tx + rng.random_range(-3.5..3.5);
            let y = ty + rng.random_range(-3.5..3.5);
            let half = (uniform(&mut rng, p.distractor_half), uniform(&mut rng, p.distractor_half));
            let h = uniform(&mut rng, p.distractor_height);
            let yaw = rng.random_range(-PI..PI);
            distractors.push(grounded_box(&terrain, x, y, half, h, yaw));
        }

        let Some(sz) = terrain.height_at(sx, sy) else {
            last_reason = "spawn outside terrain".into();
            continue;
        };
        let spawn = Pose::from_xyz_yaw(sx, sy, sz + STANDING_HEIGHT, (ty - sy).atan2(tx - sx));
        let provisional = Scene::new(family, seed, terrain.clone(), Vec::new(), target, spawn, alpha, mount)?;
        let cam = provisional.spawn_camera();
        let verts = &provisional.target.vertices;

        if !separation_ok(verts, &primary, p.min_separation) || !spawn_clear(&primary, &spawn, &cam.translation) {
            last_reason = "primary obstacle collides with target or spawn".into();
            continue;
        }
        let mut occluders = vec![primary];
        // distractors that collide are dropped rather than resampled
        occluders.extend(
            distractors
                .into_iter()
                .filter(|b| separation_ok(verts, b, p.min_separation) && spawn_clear(b, &spawn, &cam.translation)),
        );
        let scene = provisional.with_occluders(occluders)?;
        let f = occluded_vertex_fraction(&scene, &cam);
        if f < p.occluded_band.0 || f > p.occluded_band.1 {
            last_reason = format!("occluded fraction {f:.3} outside band");
            continue;
        }
        return Ok(scene);
    }
    Err(Error::Generation {
        seed,
        attempts: p.max_attempts,
        reason: last_reason,
    })
}
