use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::Pose;
use crate::error::{Error, Result};

/// Pinhole intrinsics. Pixel `(i, j)` covers `[i, i+1) x [j, j+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            fx: 525.0,
            fy: 525.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
        }
    }
}

/// Outcome of projecting a camera-frame point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Visible { u: f64, v: f64, depth: f64 },
    BehindCamera,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cx < self.width as f64
            && self.cy > 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid intrinsics {self:?}")))
        }
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Project a point given in the optical frame (+z forward, +x right, +y down).
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> Projection {
        if p.z <= 0.0 {
            return Projection::BehindCamera;
        }
        Projection::Visible {
            u: self.fx * p.x / p.z + self.cx,
            v: self.fy * p.y / p.z + self.cy,
            depth: p.z,
        }
    }

    #[inline]
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx * depth, (v - self.cy) / self.fy * depth, depth)
    }

    /// Floored pixel for continuous image coordinates, if inside the frame.
    #[inline]
    pub fn pixel(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        if !(u >= 0.0 && v >= 0.0) {
            return None;
        }
        let (iu, iv) = (u.floor(), v.floor());
        if iu < self.width as f64 && iv < self.height as f64 {
            Some((iu as usize, iv as usize))
        } else {
            None
        }
    }

    /// Optical-frame point to in-frame pixel plus depth.
    #[inline]
    pub fn project_to_pixel(&self, p: &Vector3<f64>) -> Option<(usize, usize, f64)> {
        match self.project(p) {
            Projection::Visible { u, v, depth } => self.pixel(u, v).map(|(i, j)| (i, j, depth)),
            Projection::BehindCamera => None,
        }
    }

    /// Optical-frame direction through continuous pixel coordinates (z = 1).
    #[inline]
    pub fn ray_direction(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Rotation taking body-convention camera coordinates (x fwd, y left, z up)
/// into the optical frame (x right, y down, z fwd).
pub fn optical_from_body() -> Matrix3<f64> {
    Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0)
}

/// World-to-optical transform for a camera with the given body-convention pose.
#[derive(Debug, Clone, Copy)]
pub struct CameraView {
    /// optical = rot * world + trans
    pub rot: Matrix3<f64>,
    pub trans: Vector3<f64>,
    pub position: Vector3<f64>,
}

impl CameraView {
    pub fn new(cam: &Pose) -> Self {
        let rot = optical_from_body() * cam.rotation.transpose();
        Self {
            rot,
            trans: -(rot * cam.translation),
            position: cam.translation,
        }
    }

    #[inline]
    pub fn to_optical(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rot * world + self.trans
    }

    #[inline]
    pub fn to_world(&self, optical: &Vector3<f64>) -> Vector3<f64> {
        self.rot.transpose() * (optical - self.trans)
    }

    #[inline]
    pub fn direction_to_world(&self, optical_dir: &Vector3<f64>) -> Vector3<f64> {
        self.rot.transpose() * optical_dir
    }

    /// Pose of the optical frame in world coordinates.
    pub fn optical_pose(&self) -> Pose {
        Pose::new(self.rot.transpose(), self.position)
    }
}
