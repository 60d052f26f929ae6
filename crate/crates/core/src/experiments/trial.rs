use std::io::Write;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{iteration_seed, perceive, HypothesisSource, Method, Perception, TrialParams};
use crate::elevation::{build_elevation_map, traversable_cells};
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::rng::{derive_seed, tag};
use crate::scene::{generate_scene, Family, LabeledMesh, Scene};
use crate::scoring::{
    evaluate_all, integrate_observation, novel_points, oracle_completion, select_best,
    volumetric_gain, OccupancyGrid, VOXEL_SIZE,
};
use crate::viewpoints::{
    camera_from_base, sample_candidates_elevation, sample_candidates_shell, CandidateView, MAX_PITCH,
};

type V3 = Vector3<f64>;

/// Which mesh the planner used after a view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanningMesh {
    /// The hypothesis recovered on this view.
    Current,
    /// Detection failed; the last valid hypothesis was reused.
    LastValid,
    /// Detection has never succeeded; the unaligned initial mesh was used.
    InitFallback,
}

impl PlanningMesh {
    pub fn name(self) -> &'static str {
        match self {
            PlanningMesh::Current => "current",
            PlanningMesh::LastValid => "last_valid",
            PlanningMesh::InitFallback => "init_fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub base: Pose,
    pub cam: Pose,
    pub success: bool,
    pub area: f64,
    pub r_vis: f64,
    pub mpvpe: Option<f64>,
    pub hypothesis: HypothesisSource,
    pub planning_mesh: PlanningMesh,
    /// Camera or base of this view lies inside an obstacle.
    pub inside_obstacle: bool,
    /// Planning after this view failed; the robot stayed in place.
    pub plan_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub seed: u64,
    pub family: Family,
    pub method: Method,
    pub iterations: Vec<IterationRecord>,
    /// Scene generation or a hard pipeline error; no iterations recorded.
    pub error: Option<String>,
}

/// Per-method state carried across iterations.
struct MethodState {
    grid: Option<OccupancyGrid>,
    predicted: Vec<V3>,
    observed_target: Vec<V3>,
}

impl MethodState {
    fn new(scene: &Scene, method: Method, p: &TrialParams, seed: u64) -> Self {
        let grid = (method == Method::Volumetric).then(|| {
            // scene bounds: terrain footprint, from the lowest ground to just
            // above the tallest object
            let ([x0, x1], [y0, y1]) = scene.terrain.extent();
            let z0 = scene.terrain.heights.iter().copied().fold(f64::INFINITY, f64::min) - VOXEL_SIZE;
            let top = scene
                .occluders
                .iter()
                .map(|b| b.top_z())
                .chain(scene.target.vertices.iter().map(|v| v.z))
                .chain(scene.terrain.heights.iter().copied())
                .fold(f64::NEG_INFINITY, f64::max);
            OccupancyGrid::covering(V3::new(x0, y0, z0), V3::new(x1, y1, top + 0.5))
        });
        let predicted = if method == Method::Pred {
            oracle_completion(&scene.target, &p.completion, derive_seed(seed, &[tag::COMPLETION]))
        } else {
            Vec::new()
        };
        Self {
            grid,
            predicted,
            observed_target: Vec::new(),
        }
    }
}

/// Iterative observe, align, sample, score, move loop. Iteration 0 is the
/// spawn view; metrics of iteration `i > 0` are measured on the view the
/// robot moved to after iteration `i - 1`.
pub fn run_trial(scene: &Scene, method: Method, p: &TrialParams, seed: u64) -> Result<TrialRecord> {
    p.validate()?;
    let mut state = MethodState::new(scene, method, p, seed);
    let mut base = scene.spawn;
    let mut cam = scene.spawn_camera();
    let mut last_valid: Option<LabeledMesh> = None;
    let mut records = Vec::with_capacity(p.iterations + 1);

    for it in 0..=p.iterations {
        let per = perceive(scene, &cam, p, iteration_seed(seed, it))?;
        let planning_mesh = match &per.hypothesis {
            Some(h) => {
                last_valid = Some(h.clone());
                PlanningMesh::Current
            }
            None if last_valid.is_some() => PlanningMesh::LastValid,
            None => PlanningMesh::InitFallback,
        };
        if let Some(g) = state.grid.as_mut() {
            integrate_observation(g, &per.obs);
        }
        if method == Method::Pred {
            state.observed_target.extend(per.world_target_points());
        }
        let mut rec = IterationRecord {
            iteration: it,
            base,
            cam,
            success: per.detected,
            area: per.area,
            r_vis: per.r_vis,
            mpvpe: per.mpvpe,
            hypothesis: per.source,
            planning_mesh,
            inside_obstacle: scene.inside_obstacle(&cam.translation) || scene.inside_obstacle(&base.translation),
            plan_error: None,
        };
        if it < p.iterations {
            let mesh = last_valid.as_ref().unwrap_or(&per.init_mesh);
            match plan(scene, method, p, &state, mesh, &per, &base, &cam, iteration_seed(seed, it)) {
                Ok((b, c)) => {
                    base = b;
                    cam = c;
                }
                Err(e) => rec.plan_error = Some(e.to_string()),
            }
        }
        records.push(rec);
    }
    Ok(TrialRecord {
        seed,
        family: scene.family,
        method,
        iterations: records,
        error: None,
    })
}

/// Choose the next `(base, camera)`.
#[allow(clippy::too_many_arguments)]
fn plan(
    scene: &Scene,
    method: Method,
    p: &TrialParams,
    state: &MethodState,
    mesh: &LabeledMesh,
    per: &Perception,
    base: &Pose,
    cam: &Pose,
    seed: u64,
) -> Result<(Pose, Pose)> {
    if method == Method::ShellOa {
        let best = select_shell_oa(p, mesh, &per.occluder_points(p.occluders), seed)?;
        return execute_on_ground(scene, &best, p);
    }
    let cands = elevation_candidates(scene, p, mesh, base, cam, seed)?;
    let chosen = match method {
        Method::OaNbv | Method::ShellOa => {
            let occluders = per.occluder_points(p.occluders);
            let scored = evaluate_all(&cands, &mesh.vertices, &occluders, &p.intrinsics, &p.weights, &p.eval);
            select_best(&scored)?.candidate
        }
        Method::Volumetric => {
            let grid = state.grid.as_ref().expect("volumetric state");
            let gains: Vec<usize> = cands
                .par_iter()
                .map(|c| volumetric_gain(c, grid, &p.intrinsics, p.ray_budget))
                .collect();
            argmax_gain(&cands, &gains)?
        }
        Method::Pred => {
            // predicted points hidden behind the observed target surface are not gained
            let scene_pts = per.world_points();
            let novel = novel_points(&state.predicted, &state.observed_target);
            let gains: Vec<usize> = evaluate_all(&cands, &novel, &scene_pts, &p.intrinsics, &p.weights, &p.eval)
                .iter()
                .map(|s| s.n_in - s.n_occ)
                .collect();
            argmax_gain(&cands, &gains)?
        }
    };
    Ok((chosen.base, chosen.cam))
}

/// Elevation-map candidates around the current base, aimed at the mesh centroid.
pub fn elevation_candidates(
    scene: &Scene,
    p: &TrialParams,
    mesh: &LabeledMesh,
    base: &Pose,
    cam: &Pose,
    seed: u64,
) -> Result<Vec<CandidateView>> {
    let map = build_elevation_map(scene, base, cam);
    let trav = traversable_cells(&map, p.h_step, base.translation.z, p.sampler.standing_height)?;
    sample_candidates_elevation(&trav, &map, &base.translation, &mesh.centroid(), &p.sampler, seed)
}

/// Best spherical-shell candidate under the occlusion-aware evaluator.
pub(crate) fn select_shell_oa(p: &TrialParams, mesh: &LabeledMesh, scene_pts: &[V3], seed: u64) -> Result<CandidateView> {
    let cands = sample_candidates_shell(&mesh.centroid(), &p.shell_radii, p.shell_per_radius, &p.sampler.mount, seed);
    let scored = evaluate_all(&cands, &mesh.vertices, scene_pts, &p.intrinsics, &p.weights, &p.eval);
    Ok(select_best(&scored)?.candidate)
}

/// Largest gain, ties to the lower candidate id.
fn argmax_gain(cands: &[CandidateView], gains: &[usize]) -> Result<CandidateView> {
    cands
        .iter()
        .zip(gains)
        .max_by(|(a, ga), (b, gb)| ga.cmp(gb).then(b.id.cmp(&a.id)))
        .map(|(c, _)| *c)
        .ok_or(Error::EmptyCandidates)
}

/// Pose a legged robot actually reaches for a free-floating candidate: the
/// base dropped onto the terrain at the candidate's ground position, same
/// yaw, pitch clamped to the mount range.
pub fn execute_on_ground(scene: &Scene, cand: &CandidateView, p: &TrialParams) -> Result<(Pose, Pose)> {
    let b = cand.base.translation;
    let ground = scene
        .terrain
        .height_at(b.x, b.y)
        .unwrap_or(scene.spawn.translation.z - p.sampler.standing_height);
    let base = Pose::from_xyz_yaw(b.x, b.y, ground + p.sampler.standing_height, cand.base.yaw());
    let alpha = cand.alpha.clamp(-MAX_PITCH, MAX_PITCH);
    let cam = camera_from_base(&base, alpha, &p.sampler.mount.pose())?;
    Ok((base, cam))
}

/// All `(seed, method)` trials of one family, ordered by seed then method.
/// Generation failures become records carrying the error.
pub fn run_suite(family: Family, seeds: &[u64], methods: &[Method], p: &TrialParams) -> Result<Vec<TrialRecord>> {
    p.validate()?;
    let per_seed: Vec<Vec<TrialRecord>> = seeds
        .par_iter()
        .map(|&seed| {
            let scene = match generate_scene(family, seed) {
                Ok(s) => s,
                Err(e) => {
                    return methods
                        .iter()
                        .map(|&method| TrialRecord {
                            seed,
                            family,
                            method,
                            iterations: Vec::new(),
                            error: Some(e.to_string()),
                        })
                        .collect()
                }
            };
            methods
                .par_iter()
                .map(|&method| {
                    run_trial(&scene, method, p, seed).unwrap_or_else(|e| TrialRecord {
                        seed,
                        family,
                        method,
                        iterations: Vec::new(),
                        error: Some(e.to_string()),
                    })
                })
                .collect()
        })
        .collect();
    Ok(per_seed.into_iter().flatten().collect())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per trial iteration; failed trials get a single row with the error.
pub fn write_trials_csv<W: Write>(w: W, records: &[TrialRecord]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "seed",
        "family",
        "method",
        "iteration",
        "cam_x",
        "cam_y",
        "cam_z",
        "cam_yaw",
        "cam_pitch",
        "success",
        "area",
        "r_vis",
        "mpvpe",
        "hypothesis",
        "planning_mesh",
        "inside_obstacle",
        "error",
    ])?;
    for r in records {
        if let Some(e) = &r.error {
            let mut row = vec![r.seed.to_string(), r.family.to_string(), r.method.to_string()];
            row.extend(std::iter::repeat_n(String::new(), 13));
            row.push(e.clone());
            wr.write_record(&row)?;
            continue;
        }
        for it in &r.iterations {
            let t = it.cam.translation;
            wr.write_record([
                r.seed.to_string(),
                r.family.to_string(),
                r.method.to_string(),
                it.iteration.to_string(),
                t.x.to_string(),
                t.y.to_string(),
                t.z.to_string(),
                it.cam.yaw().to_string(),
                it.cam.pitch_down().to_string(),
                it.success.to_string(),
                it.area.to_string(),
                it.r_vis.to_string(),
                opt(it.mpvpe),
                serde_json::to_value(it.hypothesis)?.as_str().unwrap_or_default().to_string(),
                it.planning_mesh.name().to_string(),
                it.inside_obstacle.to_string(),
                it.plan_error.clone().unwrap_or_default(),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}
