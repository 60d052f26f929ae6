use nalgebra::{Matrix3, Matrix4, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

/// Drift tolerance beyond which composed rotations are projected back onto SO(3).
const ORTHO_TOL: f64 = 1e-9;

/// Rigid transform in SE(3). Applies `rotation * p + translation`.
///
/// Poses of robot bases and cameras use the body convention (+x forward,
/// +y left, +z up); the fixed rotation into the optical frame lives in
/// [`crate::geometry::camera`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), t)
    }

    /// Rotation about +z (yaw).
    pub fn rot_z(angle: f64) -> Self {
        Self::new(*Rotation3::from_axis_angle(&Vector3::z_axis(), angle).matrix(), Vector3::zeros())
    }

    /// Rotation about +y. In the body convention a positive angle pitches the nose down.
    pub fn rot_y(angle: f64) -> Self {
        Self::new(*Rotation3::from_axis_angle(&Vector3::y_axis(), angle).matrix(), Vector3::zeros())
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::new(*Rotation3::from_axis_angle(&Vector3::x_axis(), angle).matrix(), Vector3::zeros())
    }

    /// Exponential map of a rotation vector plus a translation.
    pub fn from_axis_angle(omega: &Vector3<f64>, t: Vector3<f64>) -> Self {
        Self::new(*Rotation3::new(*omega).matrix(), t)
    }

    /// Yaw about +z followed by a translation.
    pub fn from_xyz_yaw(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        let mut p = Self::rot_z(yaw);
        p.translation = Vector3::new(x, y, z);
        p
    }

    /// Result applies `b` first, then `self`.
    pub fn compose(&self, b: &Pose) -> Pose {
        let mut out = Pose {
            rotation: self.rotation * b.rotation,
            translation: self.rotation * b.translation + self.translation,
        };
        if orthonormality_error(&out.rotation) > ORTHO_TOL {
            out.rotation = orthonormalize(&out.rotation);
        }
        out
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Pose {
        Pose {
            rotation: m.fixed_view::<3, 3>(0, 0).into_owned(),
            translation: m.fixed_view::<3, 1>(0, 3).into_owned(),
        }
    }

    /// Row-major 4x4 entries, as written to CSV exports.
    pub fn to_row_major(&self) -> [f64; 16] {
        let m = self.to_matrix();
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = m[(r, c)];
            }
        }
        out
    }

    /// Heading of the body +x axis projected on the ground plane.
    pub fn yaw(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    /// Angle of the body +x axis below the horizontal plane.
    pub fn pitch_down(&self) -> f64 {
        let fwd = self.rotation.column(0);
        (-fwd[2]).clamp(-1.0, 1.0).asin()
    }

    /// Rotation angle of `self^-1 * other`.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        let r = self.rotation.transpose() * other.rotation;
        ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        orthonormality_error(&self.rotation) <= tol
            && (self.rotation.determinant() - 1.0).abs() <= tol
            && self.translation.iter().all(|v| v.is_finite())
    }
}

/// Max absolute entry of `R^T R - I`.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

/// Nearest rotation matrix in the Frobenius sense (polar decomposition).
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut out = u * vt;
    if out.determinant() < 0.0 {
        let mut u2 = u;
        u2.column_mut(2).neg_mut();
        out = u2 * vt;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (
            prop::array::uniform3(-3.0f64..3.0),
            prop::array::uniform3(-10.0f64..10.0),
        )
            .prop_map(|(w, t)| Pose::from_axis_angle(&Vector3::from(w), Vector3::from(t)))
    }

    #[test]
    fn identity_composition() {
        let p = Pose::identity().compose(&Pose::identity());
        assert_eq!(p, Pose::identity());
    }

    #[test]
    fn compose_hand_computed() {
        // [Rz(90)|(1,0,0)] * [Rz(90)|0] = [Rz(180)|(1,0,0)]
        let mut a = Pose::rot_z(FRAC_PI_2);
        a.translation = Vector3::new(1.0, 0.0, 0.0);
        let b = Pose::rot_z(FRAC_PI_2);
        let c = a.compose(&b);
        let expected = Matrix3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0);
        assert_abs_diff_eq!(c.rotation, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(c.translation, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn positive_rot_y_pitches_forward_axis_down() {
        let p = Pose::rot_y(0.5);
        let fwd = p.transform_vector(&Vector3::x());
        assert!(fwd.z < 0.0);
        assert_abs_diff_eq!(p.pitch_down(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn matrix_round_trip() {
        let p = Pose::from_axis_angle(&Vector3::new(0.1, -0.2, 0.3), Vector3::new(1.0, 2.0, 3.0));
        let q = Pose::from_matrix(&p.to_matrix());
        assert_abs_diff_eq!(p.rotation, q.rotation, epsilon = 1e-15);
        let rm = p.to_row_major();
        assert_eq!(rm[3], 1.0);
        assert_eq!(rm[15], 1.0);
    }

    #[test]
    fn orthonormalize_repairs_drift() {
        let mut r = Pose::rot_z(0.3).rotation;
        r[(0, 1)] += 1e-4;
        let fixed = orthonormalize(&r);
        assert!(orthonormality_error(&fixed) < 1e-12);
        assert_abs_diff_eq!(fixed.determinant(), 1.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn inverse_law(p in arb_pose()) {
            let i = p.compose(&p.inverse());
            prop_assert!((i.rotation - Matrix3::identity()).abs().max() < 1e-9);
            prop_assert!(i.translation.abs().max() < 1e-9);
        }

        #[test]
        fn composition_stays_in_so3(a in arb_pose(), b in arb_pose()) {
            let c = a.compose(&b);
            prop_assert!(c.is_valid(1e-9));
        }

        #[test]
        fn distances_preserved(p in arb_pose(),
                               a in prop::array::uniform3(-5.0f64..5.0),
                               b in prop::array::uniform3(-5.0f64..5.0)) {
            let (a, b) = (Vector3::from(a), Vector3::from(b));
            let d0 = (a - b).norm();
            let d1 = (p.transform_point(&a) - p.transform_point(&b)).norm();
            prop_assert!((d0 - d1).abs() < 1e-9);
        }

        #[test]
        fn associativity(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            prop_assert!((l.to_matrix() - r.to_matrix()).abs().max() < 1e-9);
        }
    }
}
