//! Candidate camera poses: the elevation-map sampler and the spherical-shell
//! baseline.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::Vector3;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::elevation::{ElevationMap, TraversableSet};
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::rng::{stream, tag};

pub const STANDING_HEIGHT: f64 = 0.3;
pub const MAX_PITCH: f64 = 0.75;

/// Fixed base-to-camera transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Mount {
    pub forward: f64,
    pub up: f64,
    pub pitch: f64,
}

impl Default for Mount {
    fn default() -> Self {
        Self {
            forward: 0.25,
            up: 0.10,
            pitch: 0.0,
        }
    }
}

impl Mount {
    pub fn pose(&self) -> Pose {
        let mut p = Pose::rot_y(self.pitch);
        p.translation = Vector3::new(self.forward, 0.0, self.up);
        p
    }
}

/// World camera pose `base ∘ mount ∘ Ry(alpha)`; positive `alpha` pitches the
/// optical axis down.
pub fn camera_from_base(base: &Pose, alpha: f64, mount: &Pose) -> Result<Pose> {
    if !(alpha.abs() <= MAX_PITCH) {
        return Err(Error::PitchOutOfRange(alpha));
    }
    Ok(base.compose(mount).compose(&Pose::rot_y(alpha)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CandidateId {
    pub position: usize,
    pub pitch: usize,
}

impl CandidateId {
    /// Linear order used for tie-breaking.
    pub fn linear(&self, pitch_samples: usize) -> usize {
        self.position * pitch_samples + self.pitch
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateView {
    pub id: CandidateId,
    pub base: Pose,
    pub alpha: f64,
    pub cam: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerParams {
    pub m: usize,
    pub pitch_samples: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub standing_height: f64,
    pub mount: Mount,
}

impl Default for SamplerParams {
    fn default() -> Self {
        Self {
            m: 100,
            pitch_samples: 10,
            alpha_min: -MAX_PITCH,
            alpha_max: MAX_PITCH,
            standing_height: STANDING_HEIGHT,
            mount: Mount::default(),
        }
    }
}

impl SamplerParams {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.pitch_samples == 0 {
            return Err(Error::InvalidArgument("M and pitch samples must be positive".into()));
        }
        for a in [self.alpha_min, self.alpha_max] {
            if !(a.abs() <= MAX_PITCH) {
                return Err(Error::PitchOutOfRange(a));
            }
        }
        if self.alpha_min > self.alpha_max {
            return Err(Error::InvalidArgument("alpha_min exceeds alpha_max".into()));
        }
        Ok(())
    }

    /// Evenly spaced pitches including both endpoints.
    pub fn pitches(&self) -> Vec<f64> {
        let n = self.pitch_samples;
        if n == 1 {
            return vec![0.5 * (self.alpha_min + self.alpha_max)];
        }
        (0..n)
            .map(|k| self.alpha_min + (self.alpha_max - self.alpha_min) * k as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Base pose at `surface` raised by the standing height and yawed toward `look_at`.
pub fn base_facing(surface: &Vector3<f64>, look_at: &Vector3<f64>, standing_height: f64) -> Pose {
    let yaw = (look_at.y - surface.y).atan2(look_at.x - surface.x);
    Pose::from_xyz_yaw(surface.x, surface.y, surface.z + standing_height, yaw)
}

/// Traversable cells in front of `current_base` (positive dot product with the
/// bearing to the target) whose camera position falls on a known cell lying
/// below the camera.
pub fn eligible_cells(
    trav: &TraversableSet,
    map: &ElevationMap,
    current_base: &Vector3<f64>,
    target_centroid: &Vector3<f64>,
    params: &SamplerParams,
) -> Vec<usize> {
    let bearing = (target_centroid - current_base).xy();
    let mount = params.mount.pose();
    (0..trav.len())
        .filter(|&k| {
            let p = trav.points[k];
            if (p.xy() - current_base.xy()).dot(&bearing) <= 0.0 {
                return false;
            }
            let base = base_facing(&p, target_centroid, params.standing_height);
            let cam = base.compose(&mount).translation;
            match map.cell_of(cam.x, cam.y).and_then(|(i, j)| map.height(i, j)) {
                Some(h) => h < cam.z,
                None => false,
            }
        })
        .collect()
}

/// Elevation-map sampler: up to `M` eligible cells drawn uniformly without
/// replacement, each paired with every pitch sample.
pub fn sample_candidates_elevation(
    trav: &TraversableSet,
    map: &ElevationMap,
    current_base: &Vector3<f64>,
    target_centroid: &Vector3<f64>,
    params: &SamplerParams,
    seed: u64,
) -> Result<Vec<CandidateView>> {
    params.validate()?;
    if trav.is_empty() {
        return Err(Error::EmptyTraversableSet);
    }
    let eligible = eligible_cells(trav, map, current_base, target_centroid, params);
    if eligible.is_empty() {
        return Err(Error::EmptyTraversableSet);
    }
    let mut rng = stream(seed, &[tag::SAMPLER]);
    let take = params.m.min(eligible.len());
    let mut picks: Vec<usize> = index::sample(&mut rng, eligible.len(), take).into_vec();
    picks.sort_unstable();
    let mount = params.mount.pose();
    let pitches = params.pitches();
    let mut out = Vec::with_capacity(take * pitches.len());
    for (pos, &e) in picks.iter().enumerate() {
        let base = base_facing(&trav.points[eligible[e]], target_centroid, params.standing_height);
        for (pi, &alpha) in pitches.iter().enumerate() {
            out.push(CandidateView {
                id: CandidateId { position: pos, pitch: pi },
                base,
                alpha,
                cam: camera_from_base(&base, alpha, &mount)?,
            });
        }
    }
    Ok(out)
}

pub fn default_shell_radii() -> Vec<f64> {
    (0..7).map(|k| 2.0 + 0.5 * k as f64).collect()
}

/// Camera pose at `position` whose optical axis passes through `look_at`.
pub fn camera_looking_at(position: &Vector3<f64>, look_at: &Vector3<f64>) -> Pose {
    let d = (look_at - position).normalize();
    let yaw = d.y.atan2(d.x);
    let pitch = (-d.z).clamp(-1.0, 1.0).asin();
    let mut p = Pose::rot_z(yaw).compose(&Pose::rot_y(pitch));
    p.translation = *position;
    p
}

/// Spherical-shell baseline: `per_shell` cameras uniform on the upper
/// hemisphere of each radius, all aimed at the centroid. No feasibility check.
pub fn sample_candidates_shell(
    centroid: &Vector3<f64>,
    radii: &[f64],
    per_shell: usize,
    mount: &Mount,
    seed: u64,
) -> Vec<CandidateView> {
    let mut rng = stream(seed, &[tag::SHELL]);
    let mount_inv = mount.pose().inverse();
    let mut out = Vec::with_capacity(radii.len() * per_shell);
    for (s, &r) in radii.iter().enumerate() {
        for k in 0..per_shell {
            let z: f64 = rng.random_range(0.0..1.0);
            let phi = rng.random_range(0.0..2.0 * PI);
            let rho = (1.0 - z * z).sqrt();
            let pos = centroid + Vector3::new(rho * phi.cos(), rho * phi.sin(), z) * r;
            let cam = camera_looking_at(&pos, centroid);
            let alpha = cam.pitch_down();
            let base = cam.compose(&Pose::rot_y(-alpha)).compose(&mount_inv);
            out.push(CandidateView {
                id: CandidateId {
                    position: s * per_shell + k,
                    pitch: 0,
                },
                base,
                alpha,
                cam,
            });
        }
    }
    out
}

/// CSV with id, base position and yaw, pitch and the row-major camera matrix.
pub fn write_candidates_csv<W: Write>(w: W, cands: &[CandidateView]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec![
        "position".to_string(),
        "pitch_index".into(),
        "base_x".into(),
        "base_y".into(),
        "base_z".into(),
        "base_yaw".into(),
        "alpha".into(),
    ];
    header.extend((0..16).map(|k| format!("cam_{}{}", k / 4, k % 4)));
    wr.write_record(&header)?;
    for c in cands {
        let t = c.base.translation;
        let mut row = vec![
            c.id.position.to_string(),
            c.id.pitch.to_string(),
            t.x.to_string(),
            t.y.to_string(),
            t.z.to_string(),
            c.base.yaw().to_string(),
            c.alpha.to_string(),
        ];
        row.extend(c.cam.to_row_major().iter().map(|v| v.to_string()));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraView;

    #[test]
    fn identity_chain() {
        let base = Pose::from_xyz_yaw(1.0, 2.0, 0.3, 0.7);
        let cam = camera_from_base(&base, 0.0, &Pose::identity()).unwrap();
        assert_eq!(cam, base);
    }

    #[test]
    fn mount_offset_in_base_frame() {
        let base = Pose::from_xyz_yaw(1.0, 2.0, 0.3, std::f64::consts::FRAC_PI_2);
        let mut mount = Pose::identity();
        mount.translation = Vector3::new(0.3, 0.0, 0.1);
        let cam = camera_from_base(&base, 0.0, &mount).unwrap();
        assert!((cam.translation - Vector3::new(1.0, 2.3, 0.4)).norm() < 1e-12);
    }

    #[test]
    fn positive_alpha_pitches_down() {
        let cam = camera_from_base(&Pose::identity(), 0.5, &Pose::identity()).unwrap();
        let axis = CameraView::new(&cam).direction_to_world(&Vector3::z());
        let below = (-axis.z).asin();
        assert!((below - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pitch_out_of_range_rejected() {
        assert!(matches!(
            camera_from_base(&Pose::identity(), 0.8, &Pose::identity()),
            Err(Error::PitchOutOfRange(_))
        ));
    }

    #[test]
    fn pitches_include_endpoints() {
        let p = SamplerParams::default().pitches();
        assert_eq!(p.len(), 10);
        assert_eq!(p[0], -0.75);
        assert_eq!(p[9], 0.75);
    }

    #[test]
    fn shell_candidates_aim_at_centroid() {
        let c = Vector3::new(0.3, -0.2, 0.9);
        let cands = sample_candidates_shell(&c, &default_shell_radii(), 100, &Mount::default(), 4);
        assert_eq!(cands.len(), 700);
        let radii = default_shell_radii();
        for cand in &cands {
            let view = CameraView::new(&cand.cam);
            let d = (c - view.position).norm();
            assert!(radii.iter().any(|r| (r - d).abs() < 1e-9));
            assert!(view.position.z >= c.z - 1e-12);
            let axis = view.direction_to_world(&Vector3::z());
            let to = (c - view.position).normalize();
            assert!(axis.dot(&to).clamp(-1.0, 1.0).acos() < 1e-6);
            let back = cand.base.compose(&Mount::default().pose()).compose(&Pose::rot_y(cand.alpha));
            assert!((back.translation - cand.cam.translation).norm() < 1e-9);
        }
    }
}
