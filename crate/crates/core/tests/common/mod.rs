//! Independent oracles and instance generators shared by the integration
//! tests and the acceptance run.

#![allow(dead_code)]

use nalgebra::{Matrix3, Rotation3, Vector3};
use oanbv::alignment::{lift_mask, point_to_plane_icp, IcpParams};
use oanbv::geometry::{CameraIntrinsics, CameraView, KdTree, PointCloud, Pose};
use oanbv::scene::{make_humanoid, BinaryMask, JointAngles};
use oanbv::viewpoints::{CandidateId, CandidateView};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type V3 = Vector3<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rotation(r: &mut ChaCha8Rng, max_angle: f64) -> Matrix3<f64> {
    let axis = loop {
        let a = V3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        let n = a.norm();
        if n > 1e-3 && n <= 1.0 {
            break a / n;
        }
    };
    let angle = r.random_range(-max_angle..=max_angle);
    Rotation3::new(axis * angle).into_inner()
}

pub fn random_pose(r: &mut ChaCha8Rng, max_angle: f64, max_t: f64) -> Pose {
    let t = V3::new(
        r.random_range(-max_t..=max_t),
        r.random_range(-max_t..=max_t),
        r.random_range(-max_t..=max_t),
    );
    Pose::new(random_rotation(r, max_angle), t)
}

/// Camera at the world origin looking along +x.
pub fn origin_candidate() -> CandidateView {
    CandidateView {
        id: CandidateId { position: 0, pitch: 0 },
        base: Pose::identity(),
        alpha: 0.0,
        cam: Pose::identity(),
    }
}

/// A planar square patch sampled on a regular grid.
#[derive(Debug, Clone)]
pub struct Patch {
    pub center: V3,
    pub e1: V3,
    pub e2: V3,
    /// Half-extent of the sampled grid along `e1` and `e2`.
    pub half: f64,
    pub spacing: f64,
}

impl Patch {
    pub fn normal(&self) -> V3 {
        self.e1.cross(&self.e2)
    }

    pub fn samples(&self, g: usize) -> Vec<V3> {
        let mut out = Vec::with_capacity(g * g);
        for a in 0..g {
            for b in 0..g {
                let s = (a as f64 - (g - 1) as f64 / 2.0) * self.spacing;
                let t = (b as f64 - (g - 1) as f64 / 2.0) * self.spacing;
                out.push(self.center + self.e1 * s + self.e2 * t);
            }
        }
        out
    }

    /// First crossing of the ray from the origin through `v` with the patch
    /// surface, each sample owning a square of side `spacing`.
    pub fn hit_distance(&self, v: &V3) -> Option<f64> {
        let dir = v.normalize();
        let n = self.normal();
        let denom = n.dot(&dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = n.dot(&self.center) / denom;
        if t <= 0.0 {
            return None;
        }
        let q = dir * t - self.center;
        let lim = self.half + self.spacing / 2.0;
        (q.dot(&self.e1).abs() <= lim && q.dot(&self.e2).abs() <= lim).then_some(t)
    }
}

/// Small scoring instance: a camera at the origin looking along +x, a point
/// cloud standing in for the target mesh around x = 2, a sampled occluding
/// patch in front of it and a background wall behind it.
#[derive(Debug, Clone)]
pub struct ScoringInstance {
    pub cand: CandidateView,
    pub mesh: Vec<V3>,
    pub scene: Vec<V3>,
    pub patch: Patch,
}

pub fn scoring_instance(seed: u64, k: &CameraIntrinsics) -> ScoringInstance {
    let mut r = rng(seed);
    let n_m = r.random_range(100..=300);
    let mut mesh = Vec::with_capacity(n_m);
    for i in 0..n_m {
        let v = match i % 10 {
            // off to the side: out of frame
            0 => V3::new(2.0, r.random_range(1.2..2.0) * if r.random_bool(0.5) { 1.0 } else { -1.0 }, 0.0),
            // behind the camera
            1 if i % 20 == 1 => V3::new(-r.random_range(0.5..2.0), r.random_range(-0.1..0.1), 0.0),
            _ => V3::new(
                r.random_range(1.8..2.2),
                r.random_range(-0.15..0.15),
                r.random_range(-0.15..0.15),
            ),
        };
        mesh.push(v);
    }

    let depth = r.random_range(0.5..0.9);
    let g = r.random_range(12..=20usize);
    // 2 px between neighbors, as in an observation rendered at stride 2
    let spacing = 2.0 * depth / k.fx;
    let spin = r.random_range(0.0..std::f64::consts::PI);
    let tilt = r.random_range(-0.4..0.4);
    let rot = Rotation3::from_euler_angles(spin, 0.0, tilt);
    let e1 = rot * V3::y();
    let e2 = rot * V3::z();
    let reach = 0.15 * depth / 2.0;
    let center = V3::new(depth, r.random_range(-reach..reach), r.random_range(-reach..reach));
    let patch = Patch {
        center,
        e1,
        e2,
        half: (g - 1) as f64 / 2.0 * spacing,
        spacing,
    };
    let mut scene = patch.samples(g);
    while scene.len() < 500 {
        scene.push(V3::new(3.0, r.random_range(-0.3..0.3), r.random_range(-0.3..0.3)));
    }
    ScoringInstance {
        cand: origin_candidate(),
        mesh,
        scene,
        patch,
    }
}

/// Exact counts for a [`ScoringInstance`]: a vertex is in frame when its
/// pinhole projection lands in the image, and occluded when its pixel ray
/// crosses the occluding surface in front of it by more than the margin.
pub fn scoring_oracle(inst: &ScoringInstance, k: &CameraIntrinsics, margin: f64) -> (usize, usize) {
    let mut n_in = 0;
    let mut n_occ = 0;
    for v in &inst.mesh {
        // camera looks along +x with +y left and +z up
        let (x, y, z) = (-v.y, -v.z, v.x);
        if z <= 0.0 {
            continue;
        }
        let u = k.fx * x / z + k.cx;
        let w = k.fy * y / z + k.cy;
        if !(u >= 0.0 && u < k.width as f64 && w >= 0.0 && w < k.height as f64) {
            continue;
        }
        n_in += 1;
        if let Some(t) = inst.patch.hit_distance(v) {
            // depth along the optical axis scales with range on a fixed ray
            if t < v.norm() * (1.0 - margin) {
                n_occ += 1;
            }
        }
    }
    (n_in, n_occ)
}

/// Result of one synthetic ICP recovery trial.
#[derive(Debug, Clone, Copy)]
pub struct IcpTrial {
    pub rot_err: f64,
    pub trans_err: f64,
    pub first: f64,
    pub last: f64,
}

/// Register the centered humanoid template to a rigidly moved copy of itself
/// (rotation up to 15 degrees, translation up to 0.3 m), full overlap.
pub fn icp_trial(seed: u64) -> Option<IcpTrial> {
    let mut r = rng(seed);
    let m = make_humanoid(&JointAngles::default(), 1.7).ok()?;
    let c = m.centroid();
    let src: Vec<V3> = m.vertices.iter().map(|v| v - c).collect();
    let normals = m.vertex_normals();
    let rot = random_rotation(&mut r, 15f64.to_radians());
    let dir = loop {
        let d = V3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        if d.norm() > 1e-3 && d.norm() <= 1.0 {
            break d.normalize();
        }
    };
    let truth = Pose::new(rot, dir * r.random_range(0.0..=0.3));
    let mut tgt = PointCloud::new(src.iter().map(|p| truth.transform_point(p)).collect());
    tgt.set_normals(normals.iter().map(|n| Some(rot * n)).collect()).ok()?;
    let res = point_to_plane_icp(&src, &tgt, &Pose::identity(), &IcpParams::default()).ok()?;
    Some(IcpTrial {
        rot_err: res.transform.rotation_angle_to(&truth),
        trans_err: (res.transform.translation - truth.translation).norm(),
        first: res.residual_history[0],
        last: *res.residual_history.last()?,
    })
}

/// Failures of each geometry check over `n` random instances:
/// `(projection round trip, group laws, nearest neighbor, lift_mask partition)`.
pub fn geometry_suite(n: u64, k: &CameraIntrinsics) -> [usize; 4] {
    let mut fails = [0usize; 4];
    for seed in 0..n {
        let mut r = rng(1000 + seed);

        let p = V3::new(r.random_range(-2.0..2.0), r.random_range(-1.5..1.5), r.random_range(0.5..6.0));
        let ok = match k.project_to_pixel(&p) {
            Some(_) => {
                let u = k.fx * p.x / p.z + k.cx;
                let v = k.fy * p.y / p.z + k.cy;
                (k.unproject(u, v, p.z) - p).norm() <= 1e-6
            }
            None => true,
        };
        fails[0] += usize::from(!ok);

        let a = random_pose(&mut r, std::f64::consts::PI, 5.0);
        let b = random_pose(&mut r, std::f64::consts::PI, 5.0);
        let c = random_pose(&mut r, std::f64::consts::PI, 5.0);
        let q = V3::new(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
        let close = |x: &Pose, y: &Pose| (x.to_matrix() - y.to_matrix()).abs().max() <= 1e-9;
        let ok = close(&a.compose(&b).compose(&c), &a.compose(&b.compose(&c)))
            && close(&a.compose(&a.inverse()), &Pose::identity())
            && close(&a.inverse().compose(&a), &Pose::identity())
            && close(&a.compose(&Pose::identity()), &a)
            && (a.compose(&b).transform_point(&q) - a.transform_point(&b.transform_point(&q))).norm() <= 1e-9
            && ((a.transform_point(&q) - a.transform_point(&p)).norm() - (q - p).norm()).abs() <= 1e-9;
        fails[1] += usize::from(!ok);

        let n_pts = r.random_range(1..400);
        let pts: Vec<V3> = (0..n_pts)
            .map(|_| {
                // a coarse lattice makes exact ties common
                V3::new(
                    r.random_range(0..8) as f64 * 0.25,
                    r.random_range(0..8) as f64 * 0.25,
                    r.random_range(0..4) as f64 * 0.25,
                )
            })
            .collect();
        let tree = KdTree::build(&pts);
        let ok = (0..20).all(|_| {
            let q = V3::new(r.random_range(-0.5..2.5), r.random_range(-0.5..2.5), r.random_range(-0.5..1.5));
            let mut best = (usize::MAX, f64::INFINITY);
            for (i, p) in pts.iter().enumerate() {
                let d = (p - q).norm_squared();
                if d < best.1 {
                    best = (i, d);
                }
            }
            tree.nearest_sq(&q).map(|(i, _)| i) == Some(best.0)
        });
        fails[2] += usize::from(!ok);

        let cloud = PointCloud::new(
            (0..r.random_range(0..300))
                .map(|_| V3::new(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), r.random_range(-1.0..6.0)))
                .collect(),
        );
        let mut mask = BinaryMask::for_camera(k, 2);
        for j in 0..mask.height {
            for i in 0..mask.width {
                mask.set(i, j, r.random_bool(0.4));
            }
        }
        let (t, bgd) = lift_mask(&cloud, k, &mask);
        let mut all: Vec<[u64; 3]> = t.points.iter().chain(&bgd.points).map(|p| p.map(f64::to_bits).into()).collect();
        let mut orig: Vec<[u64; 3]> = cloud.points.iter().map(|p| p.map(f64::to_bits).into()).collect();
        all.sort_unstable();
        orig.sort_unstable();
        let ok = t.len() + bgd.len() == cloud.len()
            && all == orig
            && t.points.iter().all(|p| {
                k.project_to_pixel(p).is_some_and(|(u, v, _)| mask.at_pixel(u, v))
            });
        fails[3] += usize::from(!ok);
    }
    fails
}

/// View used by several tests: optical-frame coordinates of a world point.
pub fn optical(cam: &Pose, p: &V3) -> V3 {
    CameraView::new(cam).to_optical(p)
}
