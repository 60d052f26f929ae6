//! Occlusion-aware viewpoint evaluator, argmax selection and the two
//! baseline gains.

mod occupancy;
mod pred;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use occupancy::{integrate_observation, volumetric_gain, OccupancyGrid, VoxelState, DEFAULT_RAY_BUDGET, VOXEL_SIZE};
pub use pred::{novel_points, oracle_completion, pred_gain, CompletionParams, NOVELTY_RADIUS};

use crate::error::{Error, Result};
use crate::geometry::{splat_footprint, CameraIntrinsics, CameraView};
use crate::viewpoints::CandidateView;

type V3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub w_v: f64,
    pub w_a: f64,
    pub w_o: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            w_v: 0.03,
            w_a: 0.14,
            w_o: 0.83,
        }
    }
}

impl Weights {
    pub fn new(w_v: f64, w_a: f64, w_o: f64) -> Result<Self> {
        let w = Self { w_v, w_a, w_o };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.w_v, self.w_a, self.w_o].iter().all(|w| w.is_finite() && *w >= 0.0)
            && (self.w_v + self.w_a + self.w_o - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidWeights {
                w_v: self.w_v,
                w_a: self.w_a,
                w_o: self.w_o,
            })
        }
    }
}

/// Depth-test knobs of the evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    pub splat_radius: usize,
    pub depth_margin: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            splat_radius: 1,
            depth_margin: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredCandidate {
    pub candidate: CandidateView,
    pub n_in: usize,
    pub n_occ: usize,
    pub s_v: f64,
    pub s_a: f64,
    pub s_o: f64,
    pub s_total: f64,
}

/// Term values `(s_v, s_a, s_o, s_total)` for the given counts; everything is
/// zero when no vertex is in frame.
pub fn score_terms(n_in: usize, n_occ: usize, n_m: usize, n_i: usize, w: &Weights) -> (f64, f64, f64, f64) {
    if n_in == 0 || n_m == 0 {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let s_v = n_in as f64 / n_m as f64;
    let s_a = n_in as f64 / n_i as f64;
    let s_o = 1.0 - n_occ as f64 / n_in as f64;
    (s_v, s_a, s_o, w.w_v * s_v + w.w_a * s_a + w.w_o * s_o)
}

/// Counts `(n_in, n_occ)` of mesh vertices for one camera, using a depth
/// buffer limited to the window spanned by the in-frame vertices.
pub fn visibility_counts(
    cam: &CameraView,
    mesh: &[V3],
    scene: &[V3],
    k: &CameraIntrinsics,
    params: &EvalParams,
) -> (usize, usize) {
    let mut hits: Vec<(usize, usize, f64)> = Vec::with_capacity(mesh.len());
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0usize, 0usize);
    for v in mesh {
        if let Some((u, w, d)) = k.project_to_pixel(&cam.to_optical(v)) {
            x0 = x0.min(u);
            y0 = y0.min(w);
            x1 = x1.max(u);
            y1 = y1.max(w);
            hits.push((u, w, d));
        }
    }
    if hits.is_empty() {
        return (0, 0);
    }
    let (ww, wh) = (x1 - x0 + 1, y1 - y0 + 1);
    let mut buf = vec![f64::INFINITY; ww * wh];
    let r = params.splat_radius;
    for p in scene {
        let q = cam.to_optical(p);
        if q.z <= 0.0 {
            continue;
        }
        let u = k.fx * q.x / q.z + k.cx;
        let v = k.fy * q.y / q.z + k.cy;
        let Some(rect) = splat_footprint(u, v, r, k.width, k.height) else {
            continue;
        };
        let (ax, bx) = (rect.x0.max(x0), rect.x1.min(x1));
        let (ay, by) = (rect.y0.max(y0), rect.y1.min(y1));
        if ax > bx || ay > by {
            continue;
        }
        for y in ay..=by {
            let row = (y - y0) * ww;
            for x in ax..=bx {
                let slot = &mut buf[row + x - x0];
                if q.z < *slot {
                    *slot = q.z;
                }
            }
        }
    }
    let n_occ = hits
        .iter()
        .filter(|&&(u, v, d)| {
            let b = buf[(v - y0) * ww + (u - x0)];
            b.is_finite() && b < d * (1.0 - params.depth_margin)
        })
        .count();
    (hits.len(), n_occ)
}

/// Score one candidate against the mesh hypothesis and the observed scene
/// points, both in world coordinates.
pub fn evaluate_viewpoint(
    cand: &CandidateView,
    mesh: &[V3],
    scene: &[V3],
    k: &CameraIntrinsics,
    w: &Weights,
    params: &EvalParams,
) -> ScoredCandidate {
    let (n_in, n_occ) = visibility_counts(&CameraView::new(&cand.cam), mesh, scene, k, params);
    scored(cand, n_in, n_occ, mesh.len(), k.pixel_count(), w)
}

fn scored(cand: &CandidateView, n_in: usize, n_occ: usize, n_m: usize, n_i: usize, w: &Weights) -> ScoredCandidate {
    let (s_v, s_a, s_o, s_total) = score_terms(n_in, n_occ, n_m, n_i, w);
    ScoredCandidate {
        candidate: *cand,
        n_in,
        n_occ,
        s_v,
        s_a,
        s_o,
        s_total,
    }
}

/// Scene points that can influence the depth test of any mesh vertex seen
/// from `eye`: inside the cone around the mesh bounding sphere (widened by the
/// splat footprint) and not farther than the sphere allows.
pub fn cull_scene_for_eye(eye: &V3, mesh: &[V3], scene: &[V3], k: &CameraIntrinsics, params: &EvalParams) -> Vec<V3> {
    let Some(c) = crate::geometry::centroid(mesh) else {
        return Vec::new();
    };
    let radius = mesh.iter().map(|v| (v - c).norm()).fold(0.0, f64::max);
    let to_c = c - eye;
    let d = to_c.norm();
    if d <= radius * 1.01 {
        return scene.to_vec();
    }
    let dir = to_c / d;
    let slack = (params.splat_radius as f64 + 2.0) / k.fx.min(k.fy);
    let half_angle = (radius / d).asin() + slack;
    if half_angle >= std::f64::consts::FRAC_PI_2 {
        return scene.to_vec();
    }
    let cos_cone = half_angle.cos();
    // an occluder shares a pixel (up to the splat) with the vertex it hides, so
    // its ray is within `slack` of the vertex ray; with depth = range * cos of
    // the off-axis angle, bounded by the frame diagonal, its range can exceed
    // the vertex range by at most a factor 1 + tan(angle) * slack
    let diag = ((k.width as f64 / k.fx).powi(2) + (k.height as f64 / k.fy).powi(2)).sqrt();
    let max_range = (d + radius) * (1.0 + 2.0 * diag * slack) + 1e-6;
    scene
        .iter()
        .filter(|p| {
            let q = *p - eye;
            let n = q.norm();
            n > 0.0 && n <= max_range && q.dot(&dir) >= cos_cone * n
        })
        .copied()
        .collect()
}

/// Evaluate a candidate batch. Candidates sharing a camera position reuse one
/// culled copy of the scene; results are in input order.
pub fn evaluate_all(
    cands: &[CandidateView],
    mesh: &[V3],
    scene: &[V3],
    k: &CameraIntrinsics,
    w: &Weights,
    params: &EvalParams,
) -> Vec<ScoredCandidate> {
    let groups = group_by_position(cands);
    let mut out: Vec<Option<ScoredCandidate>> = vec![None; cands.len()];
    let results: Vec<Vec<(usize, ScoredCandidate)>> = groups
        .par_iter()
        .map(|idx| {
            let eye = cands[idx[0]].cam.translation;
            let local = cull_scene_for_eye(&eye, mesh, scene, k, params);
            idx.iter()
                .map(|&i| (i, evaluate_viewpoint(&cands[i], mesh, &local, k, w, params)))
                .collect()
        })
        .collect();
    for (i, s) in results.into_iter().flatten() {
        out[i] = Some(s);
    }
    out.into_iter().map(|s| s.expect("every candidate scored")).collect()
}

/// Indices grouped by exactly equal camera position, groups in first-seen order.
pub fn group_by_position(cands: &[CandidateView]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, c) in cands.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if cands[g[0]].cam.translation == c.cam.translation => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Highest total score; ties go to the lower candidate id.
pub fn select_best(scored: &[ScoredCandidate]) -> Result<ScoredCandidate> {
    best_by(scored, |s| s.s_total).ok_or(Error::EmptyCandidates)
}

/// Index-free argmax with the lower-id tie rule for an arbitrary key.
pub fn best_by<F: Fn(&ScoredCandidate) -> f64>(scored: &[ScoredCandidate], key: F) -> Option<ScoredCandidate> {
    let mut best: Option<(&ScoredCandidate, f64)> = None;
    for s in scored {
        let v = key(s);
        best = match best {
            None => Some((s, v)),
            Some((b, bv)) if v > bv || (v == bv && s.candidate.id < b.candidate.id) => Some((s, v)),
            keep => keep,
        };
    }
    best.map(|(s, _)| *s)
}

/// Per-candidate score table.
pub fn write_scores_csv<W: std::io::Write>(w: W, scored: &[ScoredCandidate], gains: Option<&[f64]>) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "position",
        "pitch_index",
        "n_in",
        "n_occ",
        "s_v",
        "s_a",
        "s_o",
        "s_total",
        "baseline_gain",
    ])?;
    for (i, s) in scored.iter().enumerate() {
        let gain = gains.map(|g| g[i].to_string()).unwrap_or_default();
        wr.write_record([
            s.candidate.id.position.to_string(),
            s.candidate.id.pitch.to_string(),
            s.n_in.to_string(),
            s.n_occ.to_string(),
            s.s_v.to_string(),
            s.s_a.to_string(),
            s.s_o.to_string(),
            s.s_total.to_string(),
            gain,
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::viewpoints::CandidateId;

    fn cand(id: usize, cam: Pose) -> CandidateView {
        CandidateView {
            id: CandidateId { position: id, pitch: 0 },
            base: cam,
            alpha: 0.0,
            cam,
        }
    }

    fn with_total(id: usize, s: f64) -> ScoredCandidate {
        ScoredCandidate {
            candidate: cand(id, Pose::identity()),
            n_in: 1,
            n_occ: 0,
            s_v: 0.0,
            s_a: 0.0,
            s_o: 0.0,
            s_total: s,
        }
    }

    #[test]
    fn weights_validation() {
        assert!(Weights::new(0.5, 0.6, 0.2).is_err());
        assert!(Weights::new(-0.1, 0.6, 0.5).is_err());
        assert!(Weights::default().validate().is_ok());
    }

    #[test]
    fn tie_goes_to_lower_id() {
        let s = [with_total(0, 0.2), with_total(1, 0.9), with_total(2, 0.9)];
        assert_eq!(select_best(&s).unwrap().candidate.id.position, 1);
        let rev = [with_total(2, 0.9), with_total(1, 0.9), with_total(0, 0.2)];
        assert_eq!(select_best(&rev).unwrap().candidate.id.position, 1);
        assert!(matches!(select_best(&[]), Err(Error::EmptyCandidates)));
    }

    #[test]
    fn blind_view_scores_zero() {
        let mesh = vec![V3::new(-2.0, 0.0, 0.0), V3::new(-2.0, 0.1, 0.0)];
        let s = evaluate_viewpoint(
            &cand(0, Pose::identity()),
            &mesh,
            &[],
            &CameraIntrinsics::default(),
            &Weights::default(),
            &EvalParams::default(),
        );
        assert_eq!((s.n_in, s.s_total), (0, 0.0));
    }

    #[test]
    fn unoccluded_mesh_scores() {
        let mesh: Vec<V3> = (0..10).map(|i| V3::new(3.0, 0.1 * i as f64 - 0.5, 0.0)).collect();
        let w = Weights::default();
        let k = CameraIntrinsics::default();
        let s = evaluate_viewpoint(&cand(0, Pose::identity()), &mesh, &[], &k, &w, &EvalParams::default());
        assert_eq!(s.n_in, 10);
        assert_eq!(s.s_v, 1.0);
        assert_eq!(s.s_o, 1.0);
        assert_eq!(s.s_total, w.w_v + w.w_a * (10.0 / 307200.0) + w.w_o);
    }
}
