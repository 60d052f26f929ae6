//! Mask lifting, visible-part extraction, part-aware rigid registration and
//! the mesh error metric.

mod icp;

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use icp::{point_to_plane_icp, IcpParams, IcpResult};

use crate::error::{Error, Result};
use crate::geometry::{estimate_normals, Bvh, CameraIntrinsics, CameraView, PointCloud, Pose, Ray, Triangle, DEFAULT_NORMAL_K};
use crate::scene::{oracle_segmentation, BinaryMask, LabeledMesh, Observation, PartLabel, PartSet, Scene, SurfaceTag};

const MIN_TARGET_POINTS: usize = 10;

/// Split a camera-frame cloud by the mask value at each point's floored pixel.
/// Points behind the camera or outside the frame go to the background.
pub fn lift_mask(cloud: &PointCloud, k: &CameraIntrinsics, mask: &BinaryMask) -> (PointCloud, PointCloud) {
    let mut tgt = Vec::new();
    let mut bg = Vec::new();
    for p in &cloud.points {
        let inside = k.project_to_pixel(p).is_some_and(|(u, v, _)| mask.at_pixel(u, v));
        if inside {
            tgt.push(*p);
        } else {
            bg.push(*p);
        }
    }
    (PointCloud::new(tgt), PointCloud::new(bg))
}

/// Parts with at least `frac_threshold` of their vertices in frame and in
/// line of sight. Surface hits within `SELF_MARGIN` of the vertex count as
/// the vertex itself.
pub fn visible_parts(scene: &Scene, cam: &Pose, k: &CameraIntrinsics, frac_threshold: f64) -> PartSet {
    visible_parts_noisy(scene, cam, k, frac_threshold, 0.0, 0)
}

const SELF_MARGIN: f64 = 0.01;

/// [`visible_parts`] with each part's membership flipped with probability
/// `flip_prob`.
pub fn visible_parts_noisy(
    scene: &Scene,
    cam: &Pose,
    k: &CameraIntrinsics,
    frac_threshold: f64,
    flip_prob: f64,
    seed: u64,
) -> PartSet {
    let view = CameraView::new(cam);
    let world = scene.world();
    let mesh = &scene.target;
    let mut seen = [0usize; 14];
    let mut total = [0usize; 14];
    for (v, part) in mesh.vertices.iter().zip(&mesh.part_of) {
        total[part.index()] += 1;
        if k.project_to_pixel(&view.to_optical(v)).is_none() {
            continue;
        }
        let dist = (v - view.position).norm();
        let limit = 1.0 - SELF_MARGIN / dist;
        let blocked = world.segment_blocked(&view.position, v, |tag, t| match tag {
            SurfaceTag::Target(_) => t < limit,
            _ => true,
        });
        if !blocked {
            seen[part.index()] += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PartLabel::ALL
        .into_iter()
        .filter(|p| {
            let i = p.index();
            let visible = total[i] > 0 && seen[i] as f64 >= frac_threshold * total[i] as f64;
            let flip = flip_prob > 0.0 && rng.random_bool(flip_prob.min(1.0));
            visible != flip
        })
        .collect()
}

/// Indices of the vertices whose part is in `parts`.
pub fn extract_part_submesh(mesh: &LabeledMesh, parts: &PartSet) -> Vec<usize> {
    mesh.part_indices(parts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbParams {
    pub depth_sigma: f64,
    pub lateral_sigma: f64,
    pub rot_sigma: f64,
}

impl Default for PerturbParams {
    fn default() -> Self {
        Self {
            depth_sigma: 0.4,
            lateral_sigma: 0.05,
            rot_sigma: 0.05,
        }
    }
}

/// Rigid error about the mesh centroid: translation mostly along the
/// camera-to-centroid ray, small lateral offset, small rotation. Returns the
/// perturbed mesh and the applied world transform.
pub fn perturb_initial_mesh(gt: &LabeledMesh, cam: &Pose, seed: u64, p: &PerturbParams) -> Result<(LabeledMesh, Pose)> {
    if p.depth_sigma < 0.0 || p.lateral_sigma < 0.0 || p.rot_sigma < 0.0 {
        return Err(Error::InvalidArgument("perturbation sigmas must be non-negative".into()));
    }
    if p.depth_sigma == 0.0 && p.lateral_sigma == 0.0 && p.rot_sigma == 0.0 {
        return Ok((gt.clone(), Pose::identity()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |sigma: f64| {
        if sigma > 0.0 {
            Normal::new(0.0, sigma).expect("positive sigma").sample(&mut rng)
        } else {
            0.0
        }
    };
    let c = gt.centroid();
    let ray = (c - cam.translation).try_normalize(1e-12).unwrap_or_else(Vector3::x);
    let helper = if ray.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
    let lat1 = ray.cross(&helper).normalize();
    let lat2 = ray.cross(&lat1);
    let t = ray * draw(p.depth_sigma) + lat1 * draw(p.lateral_sigma) + lat2 * draw(p.lateral_sigma);
    let omega = Vector3::new(draw(p.rot_sigma), draw(p.rot_sigma), draw(p.rot_sigma));
    let r = *Rotation3::new(omega).matrix();
    let pose = Pose::new(r, c + t - r * c);
    Ok((gt.transformed(&pose), pose))
}

/// Mean per-vertex Euclidean distance between corresponding vertices.
pub fn mpvpe(a: &LabeledMesh, b: &LabeledMesh) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::TopologyMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a.vertices.iter().zip(&b.vertices).map(|(x, y)| (x - y).norm()).sum();
    Ok(sum / a.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignParams {
    pub icp: IcpParams,
    pub boundary_noise: usize,
    pub normal_k: usize,
    /// Translate the initial mesh so the ICP source centroid sits on the
    /// target-point centroid before registering.
    pub center_on_target: bool,
    /// Register only source vertices whose normal faces the camera.
    pub camera_facing_only: bool,
    /// Drop source vertices hidden behind other parts of the mesh itself.
    pub self_visible_only: bool,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self {
            icp: IcpParams::default(),
            boundary_noise: 0,
            normal_k: DEFAULT_NORMAL_K,
            center_on_target: false,
            camera_facing_only: true,
            self_visible_only: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlignmentResult {
    /// Correction applied to the initial mesh (optical frame of the observation).
    pub t_icp: Pose,
    pub aligned: LabeledMesh,
    pub p_tgt: PointCloud,
    pub p_bg: PointCloud,
    pub visible_parts: PartSet,
    pub residual_history: Vec<f64>,
    pub source_vertices: Vec<usize>,
    /// Too few target points; the initial mesh was passed through.
    pub skipped: bool,
    /// ICP lost its correspondences; the initial mesh was passed through.
    pub degenerate: bool,
}

/// Segment, lift, and register the visible-part submesh of `init_mesh` (given
/// in the observation's optical frame) to the target points. The resulting
/// transform is applied to the full mesh.
pub fn align_target(
    obs: &Observation,
    init_mesh: &LabeledMesh,
    parts: &PartSet,
    params: &AlignParams,
    seed: u64,
) -> Result<AlignmentResult> {
    let mask = oracle_segmentation(obs, params.boundary_noise, seed);
    let (p_tgt, p_bg) = lift_mask(&obs.cloud, &obs.k, &mask);
    let mut result = AlignmentResult {
        t_icp: Pose::identity(),
        aligned: init_mesh.clone(),
        p_tgt,
        p_bg,
        visible_parts: parts.clone(),
        residual_history: Vec::new(),
        source_vertices: Vec::new(),
        skipped: false,
        degenerate: false,
    };
    if result.p_tgt.len() < MIN_TARGET_POINTS.max(params.normal_k) {
        result.skipped = true;
        return Ok(result);
    }
    let with_normals = estimate_normals(&result.p_tgt, params.normal_k, &Vector3::zeros())?;

    let mut source: Vec<usize> = if parts.is_empty() {
        (0..init_mesh.len()).collect()
    } else {
        extract_part_submesh(init_mesh, parts)
    };
    if params.camera_facing_only {
        let normals = init_mesh.vertex_normals();
        let facing: Vec<usize> = source
            .iter()
            .copied()
            .filter(|&i| normals[i].dot(&-init_mesh.vertices[i]) > 0.0)
            .collect();
        if !facing.is_empty() {
            source = facing;
        }
    }
    if params.self_visible_only {
        let seen = self_visible(init_mesh, &source);
        if !seen.is_empty() {
            source = seen;
        }
    }
    let src_pts: Vec<Vector3<f64>> = source.iter().map(|&i| init_mesh.vertices[i]).collect();
    result.source_vertices = source;

    let mut init = Pose::identity();
    if params.center_on_target {
        let sc = crate::geometry::centroid(&src_pts).expect("non-empty source");
        let tc = result.p_tgt.centroid().expect("non-empty target");
        init.translation = tc - sc;
    }
    match point_to_plane_icp(&src_pts, &with_normals, &init, &params.icp) {
        Ok(r) => {
            result.t_icp = r.transform.compose(&init);
            result.residual_history = r.residual_history;
            result.aligned = init_mesh.transformed(&result.t_icp);
        }
        Err(Error::DegenerateRegistration(_)) => result.degenerate = true,
        Err(e) => return Err(e),
    }
    Ok(result)
}

/// Vertices of `idx` that the mesh does not hide from a camera at the origin.
/// Faces within `SELF_MARGIN` of the vertex along the sight line do not count.
fn self_visible(mesh: &LabeledMesh, idx: &[usize]) -> Vec<usize> {
    let tris: Vec<Triangle<()>> = mesh
        .faces
        .iter()
        .map(|f| {
            let [a, b, c] = f.map(|i| mesh.vertices[i as usize]);
            Triangle::new(a, b, c, ())
        })
        .collect();
    let bvh = Bvh::build(tris);
    let origin = Vector3::zeros();
    idx.iter()
        .copied()
        .filter(|&i| {
            let v = mesh.vertices[i];
            let d = v.norm();
            d > SELF_MARGIN && !bvh.occluded(&Ray::between(&origin, &v), 1.0 - SELF_MARGIN / d, |_, _| true)
        })
        .collect()
}
