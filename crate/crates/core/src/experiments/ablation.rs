use std::io::Write;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;

use super::trial::{elevation_candidates, execute_on_ground, select_shell_oa};
use super::{iteration_seed, perceive, world_from_optical, TrialParams};
use crate::alignment::{align_target, mpvpe, perturb_initial_mesh, visible_parts_noisy};
use crate::error::Result;
use crate::geometry::{CameraView, Pose};
use crate::rng::{derive_seed, tag};
use crate::scene::{
    generate_scene, occluded_vertex_fraction, oracle_detection, render_observation, Family, PartSet, Scene,
};
use crate::scoring::{evaluate_all, select_best};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentAblationRow {
    pub seed: u64,
    pub occluded_fraction: f64,
    pub visible_parts: usize,
    pub mpvpe_init: f64,
    pub mpvpe_part: f64,
    pub mpvpe_full: f64,
    /// ICP lost its correspondences; the fallback MPVPE is the initial one.
    pub degenerate_part: bool,
    pub degenerate_full: bool,
    /// Too few target points to register at all.
    pub skipped: bool,
    /// Scene generation failed; every metric is NaN.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlignmentSummary {
    pub seeds: usize,
    pub median_part: f64,
    pub median_full: f64,
    pub mean_part: f64,
    pub mean_full: f64,
    /// `1 - median_part / median_full`.
    pub median_reduction: f64,
    pub degenerate_part: usize,
    pub degenerate_full: usize,
}

/// Register the same perturbed mesh twice per seed, once from the visible
/// parts and once from the whole mesh, on the spawn view.
pub fn ablation_alignment(
    family: Family,
    seeds: &[u64],
    p: &TrialParams,
) -> Result<(Vec<AlignmentAblationRow>, AlignmentSummary)> {
    p.validate()?;
    let rows: Vec<AlignmentAblationRow> = seeds
        .par_iter()
        .map(|&seed| match generate_scene(family, seed) {
            Ok(scene) => alignment_pair(&scene, p, seed),
            Err(e) => Ok(AlignmentAblationRow {
                seed,
                occluded_fraction: f64::NAN,
                visible_parts: 0,
                mpvpe_init: f64::NAN,
                mpvpe_part: f64::NAN,
                mpvpe_full: f64::NAN,
                degenerate_part: false,
                degenerate_full: false,
                skipped: false,
                error: Some(e.to_string()),
            }),
        })
        .collect::<Result<_>>()?;
    let ok: Vec<&AlignmentAblationRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    let part: Vec<f64> = ok.iter().map(|r| r.mpvpe_part).collect();
    let full: Vec<f64> = ok.iter().map(|r| r.mpvpe_full).collect();
    let (mp, mf) = (median(&part), median(&full));
    let summary = AlignmentSummary {
        seeds: ok.len(),
        median_part: mp,
        median_full: mf,
        mean_part: mean(&part),
        mean_full: mean(&full),
        median_reduction: if mf > 0.0 { 1.0 - mp / mf } else { 0.0 },
        degenerate_part: ok.iter().filter(|r| r.degenerate_part).count(),
        degenerate_full: ok.iter().filter(|r| r.degenerate_full).count(),
    };
    Ok((rows, summary))
}

fn alignment_pair(scene: &Scene, p: &TrialParams, seed: u64) -> Result<AlignmentAblationRow> {
    let cam = scene.spawn_camera();
    let obs = render_observation(scene, &cam, &p.intrinsics, p.stride);
    let s = iteration_seed(seed, 0);
    let (init_world, _) = perturb_initial_mesh(&scene.target, &cam, derive_seed(s, &[tag::PERTURB]), &p.perturb)?;
    let to_optical = world_from_optical(&obs.view()).inverse();
    let init = init_world.transformed(&to_optical);
    let gt = scene.target.transformed(&to_optical);
    let parts = visible_parts_noisy(
        scene,
        &cam,
        &p.intrinsics,
        p.part_threshold,
        p.part_flip_prob,
        derive_seed(s, &[tag::PARTS]),
    );
    let seg_seed = derive_seed(s, &[tag::SEGMENT]);
    let with_parts = align_target(&obs, &init, &parts, &p.align, seg_seed)?;
    let with_full = align_target(&obs, &init, &PartSet::new(), &p.align, seg_seed)?;
    Ok(AlignmentAblationRow {
        seed,
        occluded_fraction: occluded_vertex_fraction(scene, &cam),
        visible_parts: parts.len(),
        mpvpe_init: mpvpe(&init, &gt)?,
        mpvpe_part: mpvpe(&with_parts.aligned, &gt)?,
        mpvpe_full: mpvpe(&with_full.aligned, &gt)?,
        degenerate_part: with_parts.degenerate,
        degenerate_full: with_full.degenerate,
        skipped: with_parts.skipped,
        error: None,
    })
}

fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        f64::NAN
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

fn median(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn write_alignment_csv<W: Write>(w: W, rows: &[AlignmentAblationRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "seed",
        "occluded_fraction",
        "visible_parts",
        "mpvpe_init",
        "mpvpe_part",
        "mpvpe_full",
        "degenerate_part",
        "degenerate_full",
        "skipped",
        "error",
    ])?;
    for r in rows {
        wr.write_record([
            r.seed.to_string(),
            r.occluded_fraction.to_string(),
            r.visible_parts.to_string(),
            r.mpvpe_init.to_string(),
            r.mpvpe_part.to_string(),
            r.mpvpe_full.to_string(),
            r.degenerate_part.to_string(),
            r.degenerate_full.to_string(),
            r.skipped.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Cluttered,
    Open,
}

impl Setting {
    pub fn name(self) -> &'static str {
        match self {
            Setting::Cluttered => "cluttered",
            Setting::Open => "open",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Elevation,
    Shell,
}

impl Sampler {
    pub fn name(self) -> &'static str {
        match self {
            Sampler::Elevation => "elevation",
            Sampler::Shell => "shell",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViewpointAblationRow {
    pub seed: u64,
    pub setting: Setting,
    pub sampler: Sampler,
    pub success: bool,
    /// Selected or executed camera, or the executed base, inside an obstacle.
    pub inside_obstacle: bool,
    /// Executed base or camera within the horizontal footprint of the person.
    pub inside_target: bool,
    /// Executed camera's sight line to the target centroid is blocked.
    pub lost_line_of_sight: bool,
    /// Target centroid projects outside the executed image. Diagnostic only,
    /// not one of the failure classes above.
    pub centroid_out_of_frame: bool,
    pub r_vis: f64,
    pub area: f64,
    pub cam: [f64; 3],
    pub error: Option<String>,
}

impl ViewpointAblationRow {
    /// Selected viewpoint the robot could not physically take.
    pub fn infeasible(&self) -> bool {
        self.inside_obstacle || self.inside_target
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ViewpointSummary {
    pub setting: Setting,
    pub sampler: Sampler,
    pub trials: usize,
    pub successes: usize,
    pub inside_obstacle: usize,
    pub inside_target: usize,
    pub lost_line_of_sight: usize,
    pub centroid_out_of_frame: usize,
}

/// One NBV step from the spawn with each sampler, on each scene with its
/// obstacles (cluttered) and without them (open).
pub fn ablation_viewpoint_gen(
    family: Family,
    seeds: &[u64],
    p: &TrialParams,
) -> Result<(Vec<ViewpointAblationRow>, Vec<ViewpointSummary>)> {
    p.validate()?;
    let rows: Vec<ViewpointAblationRow> = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<ViewpointAblationRow>> {
            let cluttered = match generate_scene(family, seed) {
                Ok(s) => s,
                Err(e) => {
                    let mut out = Vec::new();
                    for setting in [Setting::Cluttered, Setting::Open] {
                        for sampler in [Sampler::Elevation, Sampler::Shell] {
                            out.push(ViewpointAblationRow {
                                seed,
                                setting,
                                sampler,
                                success: false,
                                inside_obstacle: false,
                                inside_target: false,
                                lost_line_of_sight: false,
                                centroid_out_of_frame: false,
                                r_vis: 0.0,
                                area: 0.0,
                                cam: [f64::NAN; 3],
                                error: Some(e.to_string()),
                            });
                        }
                    }
                    return Ok(out);
                }
            };
            let open = cluttered.without_occluders();
            let mut out = Vec::with_capacity(4);
            for (setting, scene) in [(Setting::Cluttered, &cluttered), (Setting::Open, &open)] {
                for sampler in [Sampler::Elevation, Sampler::Shell] {
                    out.push(one_step(scene, setting, sampler, p, seed)?);
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut summary = Vec::new();
    for setting in [Setting::Cluttered, Setting::Open] {
        for sampler in [Sampler::Elevation, Sampler::Shell] {
            let sel: Vec<&ViewpointAblationRow> = rows
                .iter()
                .filter(|r| r.setting == setting && r.sampler == sampler && r.error.is_none())
                .collect();
            summary.push(ViewpointSummary {
                setting,
                sampler,
                trials: sel.len(),
                successes: sel.iter().filter(|r| r.success).count(),
                inside_obstacle: sel.iter().filter(|r| r.inside_obstacle).count(),
                inside_target: sel.iter().filter(|r| r.inside_target).count(),
                lost_line_of_sight: sel.iter().filter(|r| r.lost_line_of_sight).count(),
                centroid_out_of_frame: sel.iter().filter(|r| r.centroid_out_of_frame).count(),
            });
        }
    }
    Ok((rows, summary))
}

fn one_step(scene: &Scene, setting: Setting, sampler: Sampler, p: &TrialParams, seed: u64) -> Result<ViewpointAblationRow> {
    let spawn_cam = scene.spawn_camera();
    let s = iteration_seed(seed, 0);
    let per = perceive(scene, &spawn_cam, p, s)?;
    let mesh = per.hypothesis.as_ref().unwrap_or(&per.init_mesh);
    let scene_pts = per.occluder_points(p.occluders);
    let mut row = ViewpointAblationRow {
        seed,
        setting,
        sampler,
        success: false,
        inside_obstacle: false,
        inside_target: false,
        lost_line_of_sight: false,
        centroid_out_of_frame: false,
        r_vis: 0.0,
        area: 0.0,
        cam: [f64::NAN; 3],
        error: None,
    };
    let (base, cam, selected): (Pose, Pose, Pose) = match sampler {
        Sampler::Elevation => {
            let chosen = elevation_candidates(scene, p, mesh, &scene.spawn, &spawn_cam, s).and_then(|cands| {
                let scored = evaluate_all(&cands, &mesh.vertices, &scene_pts, &p.intrinsics, &p.weights, &p.eval);
                select_best(&scored)
            });
            match chosen {
                Ok(b) => (b.candidate.base, b.candidate.cam, b.candidate.cam),
                Err(e) => {
                    row.error = Some(e.to_string());
                    return Ok(row);
                }
            }
        }
        Sampler::Shell => {
            let best = select_shell_oa(p, mesh, &scene_pts, s)?;
            let (base, cam) = execute_on_ground(scene, &best, p)?;
            (base, cam, best.cam)
        }
    };
    row.cam = [cam.translation.x, cam.translation.y, cam.translation.z];
    row.inside_obstacle = scene.inside_obstacle(&selected.translation)
        || scene.inside_obstacle(&cam.translation)
        || scene.inside_obstacle(&base.translation);
    row.inside_target = in_footprint(&scene.target.vertices, &cam.translation)
        || in_footprint(&scene.target.vertices, &base.translation);
    let centroid = scene.target_centroid();
    row.lost_line_of_sight = scene
        .world()
        .segment_blocked(&cam.translation, &centroid, |tag, _| !tag.is_target());
    row.centroid_out_of_frame = p
        .intrinsics
        .project_to_pixel(&CameraView::new(&cam).to_optical(&centroid))
        .is_none();
    let obs = render_observation(scene, &cam, &p.intrinsics, p.stride);
    row.success = oracle_detection(&obs, &p.detection);
    let (a, r) = super::compute_metrics(&obs, row.success);
    row.area = a;
    row.r_vis = r;
    Ok(row)
}

/// Whether `p` lies in the horizontal bounding box of `verts`.
fn in_footprint(verts: &[Vector3<f64>], p: &Vector3<f64>) -> bool {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for v in verts {
        lo = [lo[0].min(v.x), lo[1].min(v.y)];
        hi = [hi[0].max(v.x), hi[1].max(v.y)];
    }
    (lo[0]..=hi[0]).contains(&p.x) && (lo[1]..=hi[1]).contains(&p.y)
}

pub fn write_viewpoint_csv<W: Write>(w: W, rows: &[ViewpointAblationRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "seed",
        "setting",
        "sampler",
        "success",
        "inside_obstacle",
        "inside_target",
        "lost_line_of_sight",
        "centroid_out_of_frame",
        "r_vis",
        "area",
        "cam_x",
        "cam_y",
        "cam_z",
        "error",
    ])?;
    for r in rows {
        wr.write_record([
            r.seed.to_string(),
            r.setting.name().to_string(),
            r.sampler.name().to_string(),
            r.success.to_string(),
            r.inside_obstacle.to_string(),
            r.inside_target.to_string(),
            r.lost_line_of_sight.to_string(),
            r.centroid_out_of_frame.to_string(),
            r.r_vis.to_string(),
            r.area.to_string(),
            r.cam[0].to_string(),
            r.cam[1].to_string(),
            r.cam[2].to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
