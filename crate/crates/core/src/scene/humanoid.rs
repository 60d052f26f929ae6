//! Capsule humanoid with a fixed vertex topology, part labels and COCO-17
//! keypoints.

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;

type V3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartLabel {
    Head,
    Torso,
    LeftUpperArm,
    LeftLowerArm,
    RightUpperArm,
    RightLowerArm,
    LeftUpperLeg,
    LeftLowerLeg,
    RightUpperLeg,
    RightLowerLeg,
    LeftHand,
    RightHand,
    LeftFoot,
    RightFoot,
}

impl PartLabel {
    pub const ALL: [PartLabel; 14] = [
        PartLabel::Head,
        PartLabel::Torso,
        PartLabel::LeftUpperArm,
        PartLabel::LeftLowerArm,
        PartLabel::RightUpperArm,
        PartLabel::RightLowerArm,
        PartLabel::LeftUpperLeg,
        PartLabel::LeftLowerLeg,
        PartLabel::RightUpperLeg,
        PartLabel::RightLowerLeg,
        PartLabel::LeftHand,
        PartLabel::RightHand,
        PartLabel::LeftFoot,
        PartLabel::RightFoot,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PartLabel::Head => "head",
            PartLabel::Torso => "torso",
            PartLabel::LeftUpperArm => "left_upper_arm",
            PartLabel::LeftLowerArm => "left_lower_arm",
            PartLabel::RightUpperArm => "right_upper_arm",
            PartLabel::RightLowerArm => "right_lower_arm",
            PartLabel::LeftUpperLeg => "left_upper_leg",
            PartLabel::LeftLowerLeg => "left_lower_leg",
            PartLabel::RightUpperLeg => "right_upper_leg",
            PartLabel::RightLowerLeg => "right_lower_leg",
            PartLabel::LeftHand => "left_hand",
            PartLabel::RightHand => "right_hand",
            PartLabel::LeftFoot => "left_foot",
            PartLabel::RightFoot => "right_foot",
        }
    }

    pub fn from_name(s: &str) -> Option<PartLabel> {
        PartLabel::ALL.into_iter().find(|p| p.name() == s)
    }

    pub fn is_leg(self) -> bool {
        matches!(
            self,
            PartLabel::LeftUpperLeg
                | PartLabel::LeftLowerLeg
                | PartLabel::RightUpperLeg
                | PartLabel::RightLowerLeg
                | PartLabel::LeftFoot
                | PartLabel::RightFoot
        )
    }

    fn mirrored(self) -> PartLabel {
        match self {
            PartLabel::LeftUpperArm => PartLabel::RightUpperArm,
            PartLabel::LeftLowerArm => PartLabel::RightLowerArm,
            PartLabel::LeftUpperLeg => PartLabel::RightUpperLeg,
            PartLabel::LeftLowerLeg => PartLabel::RightLowerLeg,
            PartLabel::LeftHand => PartLabel::RightHand,
            PartLabel::LeftFoot => PartLabel::RightFoot,
            other => other,
        }
    }
}

pub type PartSet = BTreeSet<PartLabel>;

pub fn all_parts() -> PartSet {
    PartLabel::ALL.into_iter().collect()
}

/// COCO-17 skeleton keypoints in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Keypoint {
    Nose,
    LeftEye,
    RightEye,
    LeftEar,
    RightEar,
    LeftShoulder,
    RightShoulder,
    LeftElbow,
    RightElbow,
    LeftWrist,
    RightWrist,
    LeftHip,
    RightHip,
    LeftKnee,
    RightKnee,
    LeftAnkle,
    RightAnkle,
}

pub const NUM_KEYPOINTS: usize = 17;

impl Keypoint {
    pub const ALL: [Keypoint; NUM_KEYPOINTS] = [
        Keypoint::Nose,
        Keypoint::LeftEye,
        Keypoint::RightEye,
        Keypoint::LeftEar,
        Keypoint::RightEar,
        Keypoint::LeftShoulder,
        Keypoint::RightShoulder,
        Keypoint::LeftElbow,
        Keypoint::RightElbow,
        Keypoint::LeftWrist,
        Keypoint::RightWrist,
        Keypoint::LeftHip,
        Keypoint::RightHip,
        Keypoint::LeftKnee,
        Keypoint::RightKnee,
        Keypoint::LeftAnkle,
        Keypoint::RightAnkle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Keypoint::Nose => "nose",
            Keypoint::LeftEye => "left_eye",
            Keypoint::RightEye => "right_eye",
            Keypoint::LeftEar => "left_ear",
            Keypoint::RightEar => "right_ear",
            Keypoint::LeftShoulder => "left_shoulder",
            Keypoint::RightShoulder => "right_shoulder",
            Keypoint::LeftElbow => "left_elbow",
            Keypoint::RightElbow => "right_elbow",
            Keypoint::LeftWrist => "left_wrist",
            Keypoint::RightWrist => "right_wrist",
            Keypoint::LeftHip => "left_hip",
            Keypoint::RightHip => "right_hip",
            Keypoint::LeftKnee => "left_knee",
            Keypoint::RightKnee => "right_knee",
            Keypoint::LeftAnkle => "left_ankle",
            Keypoint::RightAnkle => "right_ankle",
        }
    }

    /// Parts enclosing an internal joint keypoint. Surface hits on these parts
    /// never hide the keypoint. Face keypoints sit on the head surface and have
    /// no local parts.
    pub fn local_parts(self) -> &'static [PartLabel] {
        use PartLabel as P;
        match self {
            Keypoint::Nose | Keypoint::LeftEye | Keypoint::RightEye | Keypoint::LeftEar | Keypoint::RightEar => &[],
            Keypoint::LeftShoulder => &[P::Torso, P::LeftUpperArm],
            Keypoint::RightShoulder => &[P::Torso, P::RightUpperArm],
            Keypoint::LeftElbow => &[P::LeftUpperArm, P::LeftLowerArm],
            Keypoint::RightElbow => &[P::RightUpperArm, P::RightLowerArm],
            Keypoint::LeftWrist => &[P::LeftLowerArm, P::LeftHand],
            Keypoint::RightWrist => &[P::RightLowerArm, P::RightHand],
            Keypoint::LeftHip => &[P::Torso, P::LeftUpperLeg],
            Keypoint::RightHip => &[P::Torso, P::RightUpperLeg],
            Keypoint::LeftKnee => &[P::LeftUpperLeg, P::LeftLowerLeg],
            Keypoint::RightKnee => &[P::RightUpperLeg, P::RightLowerLeg],
            Keypoint::LeftAnkle => &[P::LeftLowerLeg, P::LeftFoot],
            Keypoint::RightAnkle => &[P::RightLowerLeg, P::RightFoot],
        }
    }

    pub fn is_lower_body(self) -> bool {
        matches!(
            self,
            Keypoint::LeftHip
                | Keypoint::RightHip
                | Keypoint::LeftKnee
                | Keypoint::RightKnee
                | Keypoint::LeftAnkle
                | Keypoint::RightAnkle
        )
    }
}

/// Limb angles in radians, each limited to [-pi/2, pi/2].
///
/// Shoulder: abduction from the T-pose, positive lowers the arm. Elbow:
/// forward flexion of the forearm. Hip: forward flexion of the thigh. Knee:
/// backward flexion of the shank.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointAngles {
    pub left_shoulder: f64,
    pub right_shoulder: f64,
    pub left_elbow: f64,
    pub right_elbow: f64,
    pub left_hip: f64,
    pub right_hip: f64,
    pub left_knee: f64,
    pub right_knee: f64,
}

impl JointAngles {
    fn named(&self) -> [(&'static str, f64); 8] {
        [
            ("left_shoulder", self.left_shoulder),
            ("right_shoulder", self.right_shoulder),
            ("left_elbow", self.left_elbow),
            ("right_elbow", self.right_elbow),
            ("left_hip", self.left_hip),
            ("right_hip", self.right_hip),
            ("left_knee", self.left_knee),
            ("right_knee", self.right_knee),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in self.named() {
            if !(value.abs() <= FRAC_PI_2) {
                return Err(Error::JointAngleOutOfRange {
                    name,
                    value,
                });
            }
        }
        Ok(())
    }

    pub fn mirrored(&self) -> JointAngles {
        JointAngles {
            left_shoulder: self.right_shoulder,
            right_shoulder: self.left_shoulder,
            left_elbow: self.right_elbow,
            right_elbow: self.left_elbow,
            left_hip: self.right_hip,
            right_hip: self.left_hip,
            left_knee: self.right_knee,
            right_knee: self.left_knee,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMesh {
    pub vertices: Vec<V3>,
    pub faces: Vec<[u32; 3]>,
    pub part_of: Vec<PartLabel>,
    pub keypoints: [V3; NUM_KEYPOINTS],
}

impl LabeledMesh {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn transformed(&self, pose: &Pose) -> LabeledMesh {
        LabeledMesh {
            vertices: self.vertices.iter().map(|v| pose.transform_point(v)).collect(),
            faces: self.faces.clone(),
            part_of: self.part_of.clone(),
            keypoints: self.keypoints.map(|k| pose.transform_point(&k)),
        }
    }

    pub fn centroid(&self) -> V3 {
        crate::geometry::centroid(&self.vertices).unwrap_or_else(V3::zeros)
    }

    pub fn keypoint(&self, k: Keypoint) -> V3 {
        self.keypoints[k as usize]
    }

    pub fn part_indices(&self, parts: &PartSet) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&i| parts.contains(&self.part_of[i]))
            .collect()
    }

    pub fn part_count(&self, part: PartLabel) -> usize {
        self.part_of.iter().filter(|&&p| p == part).count()
    }

    /// Area-weighted outward vertex normals.
    pub fn vertex_normals(&self) -> Vec<V3> {
        let mut acc = vec![V3::zeros(); self.vertices.len()];
        for f in &self.faces {
            let [a, b, c] = f.map(|i| i as usize);
            let n = (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a]));
            acc[a] += n;
            acc[b] += n;
            acc[c] += n;
        }
        acc.into_iter()
            .map(|n| {
                let len = n.norm();
                if len > 0.0 {
                    n / len
                } else {
                    n
                }
            })
            .collect()
    }
}

const SEGMENTS: usize = 12;
const CAP_RINGS: usize = 3;
const REFERENCE_HEIGHT: f64 = 1.7;

pub const MIN_HEIGHT: f64 = 1.4;
pub const MAX_HEIGHT: f64 = 2.0;

/// Capsule between `a` and `b` with elliptical cross-section radii `r1`
/// (along `u1`) and `r2`, and hemispherical caps of axial length `rc`.
struct Capsule {
    a: V3,
    b: V3,
    u1: V3,
    r1: f64,
    r2: f64,
    rc: f64,
    rings: usize,
}

impl Capsule {
    fn emit(&self, part: PartLabel, mesh: &mut LabeledMesh) {
        let axis = (self.b - self.a).normalize();
        let u1 = (self.u1 - axis * self.u1.dot(&axis)).normalize();
        let u2 = axis.cross(&u1);
        let base = mesh.vertices.len() as u32;
        let mid = self.rings - 2 * CAP_RINGS;

        mesh.vertices.push(self.a - axis * self.rc);
        for j in 0..self.rings {
            // (position along the axis, cross-section scale)
            let (center, s) = if j < CAP_RINGS {
                let th = FRAC_PI_2 * (j + 1) as f64 / CAP_RINGS as f64;
                (self.a - axis * (self.rc * th.cos()), th.sin())
            } else if j >= CAP_RINGS + mid {
                let k = self.rings - j;
                let th = FRAC_PI_2 * k as f64 / CAP_RINGS as f64;
                (self.b + axis * (self.rc * th.cos()), th.sin())
            } else {
                let t = (j - CAP_RINGS + 1) as f64 / (mid + 1) as f64;
                (self.a + (self.b - self.a) * t, 1.0)
            };
            for i in 0..SEGMENTS {
                let phi = 2.0 * PI * i as f64 / SEGMENTS as f64;
                mesh.vertices
                    .push(center + u1 * (self.r1 * s * phi.cos()) + u2 * (self.r2 * s * phi.sin()));
            }
        }
        mesh.vertices.push(self.b + axis * self.rc);
        let count = 2 + self.rings * SEGMENTS;
        mesh.part_of.extend(std::iter::repeat_n(part, count));

        let ring = |j: usize, i: usize| base + 1 + (j * SEGMENTS + i % SEGMENTS) as u32;
        let top = base + count as u32 - 1;
        // (u1, u2, axis) is right-handed, so increasing phi runs counter-clockwise about the axis
        for i in 0..SEGMENTS {
            mesh.faces.push([base, ring(0, i + 1), ring(0, i)]);
            for j in 0..self.rings - 1 {
                mesh.faces.push([ring(j, i), ring(j, i + 1), ring(j + 1, i + 1)]);
                mesh.faces.push([ring(j, i), ring(j + 1, i + 1), ring(j + 1, i)]);
            }
            let last = self.rings - 1;
            mesh.faces.push([top, ring(last, i), ring(last, i + 1)]);
        }
    }
}

fn rot_x(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&V3::x_axis(), a)
}

fn rot_y(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&V3::y_axis(), a)
}

fn rot_z(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&V3::z_axis(), a)
}

/// Left arm and leg built with the given angles: (capsules, keypoints in
/// `[shoulder, elbow, wrist, hip, knee, ankle]` order).
fn left_limbs(shoulder: f64, elbow: f64, hip: f64, knee: f64) -> (Vec<(PartLabel, Capsule)>, [V3; 6]) {
    let sh = V3::new(0.0, 0.19, 1.42);
    // abduction about +x lowers an arm pointing along +y
    let r_up = rot_x(-shoulder);
    let upper_dir = r_up * V3::y();
    let el = sh + upper_dir * 0.28;
    // forearm flexes forward about the arm's local vertical
    let r_low = r_up * rot_z(-elbow);
    let lower_dir = r_low * V3::y();
    let wr = el + lower_dir * 0.25;
    let hand_a = wr + lower_dir * 0.04;
    let hand_b = wr + lower_dir * 0.10;

    let hp = V3::new(0.0, 0.09, 0.90);
    // forward flexion about -y swings the thigh toward +x
    let r_thigh = rot_y(-hip);
    let thigh_dir = r_thigh * -V3::z();
    let kn = hp + thigh_dir * 0.42;
    let r_shank = r_thigh * rot_y(knee);
    let shank_dir = r_shank * -V3::z();
    let an = kn + shank_dir * 0.39;
    let foot_fwd = r_shank * V3::x();
    let sole = an + shank_dir * 0.05;
    let foot_a = sole - foot_fwd * 0.04;
    let foot_b = sole + foot_fwd * 0.14;

    let caps = vec![
        (
            PartLabel::LeftUpperArm,
            Capsule { a: sh + upper_dir * 0.02, b: el, u1: r_up * V3::x(), r1: 0.045, r2: 0.045, rc: 0.045, rings: 12 },
        ),
        (
            PartLabel::LeftLowerArm,
            Capsule { a: el, b: wr, u1: r_low * V3::x(), r1: 0.04, r2: 0.04, rc: 0.04, rings: 12 },
        ),
        (
            PartLabel::LeftHand,
            Capsule { a: hand_a, b: hand_b, u1: r_low * V3::x(), r1: 0.02, r2: 0.04, rc: 0.03, rings: 7 },
        ),
        (
            PartLabel::LeftUpperLeg,
            Capsule { a: hp, b: kn, u1: r_thigh * V3::x(), r1: 0.075, r2: 0.07, rc: 0.07, rings: 14 },
        ),
        (
            PartLabel::LeftLowerLeg,
            Capsule { a: kn, b: an, u1: r_shank * V3::x(), r1: 0.055, r2: 0.05, rc: 0.05, rings: 14 },
        ),
        (
            PartLabel::LeftFoot,
            Capsule { a: foot_a, b: foot_b, u1: shank_dir, r1: 0.035, r2: 0.045, rc: 0.04, rings: 8 },
        ),
    ];
    (caps, [sh, el, wr, hp, kn, an])
}

fn mirror(v: &V3) -> V3 {
    V3::new(v.x, -v.y, v.z)
}

/// Build the template humanoid standing on z = 0, facing +x with its left
/// side toward +y. `height` is the standing height of the zero-angle pose.
pub fn make_humanoid(angles: &JointAngles, height: f64) -> Result<LabeledMesh> {
    angles.validate()?;
    if !(MIN_HEIGHT..=MAX_HEIGHT).contains(&height) {
        return Err(Error::InvalidArgument(format!(
            "humanoid height {height} outside [{MIN_HEIGHT}, {MAX_HEIGHT}] m"
        )));
    }
    let mut mesh = LabeledMesh {
        vertices: Vec::with_capacity(2048),
        faces: Vec::with_capacity(4096),
        part_of: Vec::with_capacity(2048),
        keypoints: [V3::zeros(); NUM_KEYPOINTS],
    };

    Capsule {
        a: V3::new(0.0, 0.0, 0.93),
        b: V3::new(0.0, 0.0, 1.40),
        u1: V3::x(),
        r1: 0.11,
        r2: 0.17,
        rc: 0.08,
        rings: 18,
    }
    .emit(PartLabel::Torso, &mut mesh);
    Capsule {
        a: V3::new(0.0, 0.0, 1.55),
        b: V3::new(0.0, 0.0, 1.61),
        u1: V3::x(),
        r1: 0.09,
        r2: 0.09,
        rc: 0.09,
        rings: 11,
    }
    .emit(PartLabel::Head, &mut mesh);

    let (left, lk) = left_limbs(angles.left_shoulder, angles.left_elbow, angles.left_hip, angles.left_knee);
    for (part, cap) in &left {
        cap.emit(*part, &mut mesh);
    }
    let (right, rk) = left_limbs(angles.right_shoulder, angles.right_elbow, angles.right_hip, angles.right_knee);
    for (part, cap) in &right {
        let start = mesh.vertices.len();
        let face_start = mesh.faces.len();
        cap.emit(part.mirrored(), &mut mesh);
        for v in &mut mesh.vertices[start..] {
            *v = mirror(v);
        }
        for f in &mut mesh.faces[face_start..] {
            f.swap(1, 2);
        }
    }

    // face keypoints lie on vertex columns of the head capsule
    let head_r = 0.09;
    let face = |deg: f64, z: f64| {
        let a = deg.to_radians();
        V3::new(head_r * a.cos(), head_r * a.sin(), z)
    };
    let k = &mut mesh.keypoints;
    k[Keypoint::Nose as usize] = face(0.0, 1.57);
    k[Keypoint::LeftEye as usize] = face(30.0, 1.60);
    k[Keypoint::RightEye as usize] = face(-30.0, 1.60);
    k[Keypoint::LeftEar as usize] = face(90.0, 1.59);
    k[Keypoint::RightEar as usize] = face(-90.0, 1.59);
    let joints = [
        (Keypoint::LeftShoulder, Keypoint::RightShoulder),
        (Keypoint::LeftElbow, Keypoint::RightElbow),
        (Keypoint::LeftWrist, Keypoint::RightWrist),
        (Keypoint::LeftHip, Keypoint::RightHip),
        (Keypoint::LeftKnee, Keypoint::RightKnee),
        (Keypoint::LeftAnkle, Keypoint::RightAnkle),
    ];
    for (j, (l, r)) in joints.into_iter().enumerate() {
        k[l as usize] = lk[j];
        k[r as usize] = mirror(&rk[j]);
    }

    let s = height / REFERENCE_HEIGHT;
    let min_z = mesh.vertices.iter().map(|v| v.z).fold(f64::INFINITY, f64::min) * s;
    let place = |v: &V3| V3::new(v.x * s, v.y * s, v.z * s - min_z);
    for v in &mut mesh.vertices {
        *v = place(v);
    }
    for kp in &mut mesh.keypoints {
        *kp = place(kp);
    }
    Ok(mesh)
}
