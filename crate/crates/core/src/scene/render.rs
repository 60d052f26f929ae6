use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{keypoint_visibility, Scene, SurfaceTag, NUM_KEYPOINTS};
use crate::geometry::{CameraIntrinsics, CameraView, DepthImage, PointCloud, PointLabel, Pose, Ray};

pub const DEFAULT_STRIDE: usize = 2;
const MAX_RANGE: f64 = 100.0;

/// Binary image on the ray grid. Cell `(i, j)` stands for the
/// `stride x stride` block of pixels starting at `(i * stride, j * stride)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub stride: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(width: usize, height: usize, stride: usize) -> Self {
        Self {
            width,
            height,
            stride,
            data: vec![false; width * height],
        }
    }

    /// Mask on the ray grid of `k` at the given stride.
    pub fn for_camera(k: &CameraIntrinsics, stride: usize) -> Self {
        Self::empty(k.width.div_ceil(stride), k.height.div_ceil(stride), stride)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[j * self.width + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.data[j * self.width + i] = v;
    }

    /// Value at full-resolution pixel `(u, v)`.
    #[inline]
    pub fn at_pixel(&self, u: usize, v: usize) -> bool {
        let (i, j) = (u / self.stride, v / self.stride);
        i < self.width && j < self.height && self.get(i, j)
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    /// Fraction of the image covered by the mask.
    pub fn area_fraction(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.cells() as f64
        }
    }
}

/// One simulated depth-camera frame.
#[derive(Debug, Clone)]
pub struct Observation {
    /// Points in the optical frame of `cam`, labeled target or background.
    pub cloud: PointCloud,
    /// Full-resolution pixel each cloud point was cast through.
    pub pixels: Vec<[u32; 2]>,
    pub gt_mask: BinaryMask,
    /// Optical depth per ray-grid cell.
    pub depth: DepthImage,
    pub cam: Pose,
    pub k: CameraIntrinsics,
    pub stride: usize,
    /// Keypoint visibility oracle evaluated for this camera.
    pub keypoint_visible: [bool; NUM_KEYPOINTS],
}

impl Observation {
    pub fn view(&self) -> CameraView {
        CameraView::new(&self.cam)
    }

    /// Cloud transformed into the world frame.
    pub fn world_cloud(&self) -> PointCloud {
        let view = self.view();
        PointCloud {
            points: self.cloud.points.iter().map(|p| view.to_world(p)).collect(),
            labels: self.cloud.labels.clone(),
            normals: None,
        }
    }

    pub fn visible_keypoints(&self) -> usize {
        self.keypoint_visible.iter().filter(|&&v| v).count()
    }

    pub fn ray_count(&self) -> usize {
        self.gt_mask.cells()
    }

    /// Copy with isotropic Gaussian noise on every cloud point.
    pub fn jittered(&self, sigma: f64, seed: u64) -> Observation {
        let mut out = self.clone();
        if sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = Normal::new(0.0, sigma).expect("positive sigma");
            for p in &mut out.cloud.points {
                *p += Vector3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng));
            }
        }
        out
    }
}

/// Cast one ray through the center of every `stride`-th pixel and record the
/// first surface hit.
pub fn render_observation(scene: &Scene, cam: &Pose, k: &CameraIntrinsics, stride: usize) -> Observation {
    let stride = stride.max(1);
    let view = CameraView::new(cam);
    let mut mask = BinaryMask::for_camera(k, stride);
    let (gw, gh) = (mask.width, mask.height);
    let world = scene.world();

    let rows: Vec<Vec<(usize, Vector3<f64>, bool)>> = (0..gh)
        .into_par_iter()
        .map(|j| {
            let v = j * stride;
            let mut row = Vec::new();
            for i in 0..gw {
                let u = i * stride;
                let dir = k.ray_direction(u as f64 + 0.5, v as f64 + 0.5);
                let ray = Ray::new(view.position, view.direction_to_world(&dir));
                if let Some(hit) = world.first_hit(&ray, MAX_RANGE) {
                    row.push((i, dir * hit.t, matches!(hit.tag, SurfaceTag::Target(_))));
                }
            }
            row
        })
        .collect();

    let mut depth = DepthImage::empty(gw, gh);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut pixels = Vec::new();
    for (j, row) in rows.into_iter().enumerate() {
        for (i, p, is_target) in row {
            depth.depth[j * gw + i] = p.z;
            if is_target {
                mask.set(i, j, true);
            }
            points.push(p);
            labels.push(if is_target { PointLabel::Target } else { PointLabel::Background });
            pixels.push([(i * stride) as u32, (j * stride) as u32]);
        }
    }
    Observation {
        cloud: PointCloud::with_labels(points, labels).expect("labels built alongside points"),
        pixels,
        gt_mask: mask,
        depth,
        cam: *cam,
        k: *k,
        stride,
        keypoint_visible: keypoint_visibility(scene, cam, k),
    }
}
