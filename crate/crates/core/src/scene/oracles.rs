use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BinaryMask, Keypoint, Observation, Scene, SurfaceTag, NUM_KEYPOINTS};
use crate::geometry::{CameraIntrinsics, CameraView, Pose};

/// Target hits closer to the camera than a keypoint by less than this do not
/// hide it.
pub const SELF_OCCLUSION_MARGIN: f64 = 0.03;

/// Ground-truth mask grown or shrunk by a seeded amount of at most
/// `boundary_noise` ray-grid cells (Chebyshev structuring element).
pub fn oracle_segmentation(obs: &Observation, boundary_noise: usize, seed: u64) -> BinaryMask {
    if boundary_noise == 0 {
        return obs.gt_mask.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = boundary_noise as i64;
    let amount = rng.random_range(-n..=n);
    morph(&obs.gt_mask, amount)
}

/// Dilate (`amount > 0`) or erode (`amount < 0`) by `|amount|` cells.
fn morph(mask: &BinaryMask, amount: i64) -> BinaryMask {
    if amount == 0 {
        return mask.clone();
    }
    let r = amount.unsigned_abs() as usize;
    let dilate = amount > 0;
    let mut out = mask.clone();
    for j in 0..mask.height {
        for i in 0..mask.width {
            let (i0, i1) = (i.saturating_sub(r), (i + r).min(mask.width - 1));
            let (j0, j1) = (j.saturating_sub(r), (j + r).min(mask.height - 1));
            let mut any = false;
            let mut all = true;
            for y in j0..=j1 {
                for x in i0..=i1 {
                    let m = mask.get(x, y);
                    any |= m;
                    all &= m;
                }
            }
            out.set(i, j, if dilate { any } else { all });
        }
    }
    out
}

/// Per-keypoint visibility of the scene's target from `cam`.
pub fn keypoint_visibility(scene: &Scene, cam: &Pose, k: &CameraIntrinsics) -> [bool; NUM_KEYPOINTS] {
    let view = CameraView::new(cam);
    let world = scene.world();
    let mut out = [false; NUM_KEYPOINTS];
    for (slot, kp) in out.iter_mut().zip(Keypoint::ALL) {
        let p = scene.target.keypoint(kp);
        if k.project_to_pixel(&view.to_optical(&p)).is_none() {
            continue;
        }
        let dist = (p - view.position).norm();
        let limit = 1.0 - SELF_OCCLUSION_MARGIN / dist;
        let local = kp.local_parts();
        *slot = !world.segment_blocked(&view.position, &p, |tag, t| match tag {
            SurfaceTag::Target(part) => !local.contains(part) && t < limit,
            _ => true,
        });
    }
    out
}

/// `(n_vis, n_kp)`.
pub fn oracle_keypoint_visibility(scene: &Scene, cam: &Pose, k: &CameraIntrinsics) -> (usize, usize) {
    let vis = keypoint_visibility(scene, cam, k);
    (vis.iter().filter(|&&v| v).count(), NUM_KEYPOINTS)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionThresholds {
    pub tau_area: f64,
    pub tau_kp: usize,
}

impl Default for DetectionThresholds {
    fn default() -> Self {
        Self {
            tau_area: 0.005,
            tau_kp: 4,
        }
    }
}

/// Detector stand-in: enough target area and enough visible keypoints.
pub fn oracle_detection(obs: &Observation, th: &DetectionThresholds) -> bool {
    obs.gt_mask.area_fraction() >= th.tau_area && obs.visible_keypoints() >= th.tau_kp
}
