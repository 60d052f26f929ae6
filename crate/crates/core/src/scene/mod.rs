//! Synthetic worlds, the simulated depth camera and ground-truth perception
//! oracles.

mod generate;
pub mod humanoid;
mod oracles;
mod render;
mod world;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub use generate::{generate_scene, generate_scene_with, occluded_vertex_fraction, GenerationParams, ROBOT_RADIUS};
pub use humanoid::{all_parts, make_humanoid, JointAngles, Keypoint, LabeledMesh, PartLabel, PartSet, NUM_KEYPOINTS};
pub use oracles::{
    keypoint_visibility, oracle_detection, oracle_keypoint_visibility, oracle_segmentation, DetectionThresholds,
    SELF_OCCLUSION_MARGIN,
};
pub use render::{render_observation, BinaryMask, Observation, DEFAULT_STRIDE};
pub use world::{BoxOccluder, SurfaceTag, Terrain, World};

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::viewpoints::{camera_from_base, Mount, MAX_PITCH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Indoor,
    Outdoor,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Indoor => "indoor",
            Family::Outdoor => "outdoor",
        }
    }

    pub(crate) fn tag(self) -> u64 {
        match self {
            Family::Indoor => 1,
            Family::Outdoor => 2,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "indoor" => Ok(Family::Indoor),
            "outdoor" => Ok(Family::Outdoor),
            other => Err(Error::Parse(format!("unknown scenario family '{other}' (expected indoor or outdoor)"))),
        }
    }
}

/// Ground-truth target placement: template parameters plus a planar pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub position: [f64; 3],
    pub yaw: f64,
    pub height: f64,
    pub joint_angles: JointAngles,
}

impl TargetSpec {
    pub fn pose(&self) -> Pose {
        Pose::from_xyz_yaw(self.position[0], self.position[1], self.position[2], self.yaw)
    }

    pub fn template(&self) -> Result<LabeledMesh> {
        make_humanoid(&self.joint_angles, self.height)
    }

    pub fn mesh(&self) -> Result<LabeledMesh> {
        Ok(self.template()?.transformed(&self.pose()))
    }
}

/// Immutable world: terrain, obstacles, the posed target and the robot spawn.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "SceneDoc", try_from = "SceneDoc")]
pub struct Scene {
    pub family: Family,
    pub seed: u64,
    pub terrain: Terrain,
    pub occluders: Vec<BoxOccluder>,
    pub target_spec: TargetSpec,
    /// Robot base pose at spawn (body convention, yawed toward the target).
    pub spawn: Pose,
    /// Camera pitch at spawn.
    pub spawn_alpha: f64,
    pub mount: Mount,
    pub target: LabeledMesh,
    world: Arc<World>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    family: Family,
    seed: u64,
    terrain: Terrain,
    occluders: Vec<BoxOccluder>,
    target: TargetSpec,
    spawn: SpawnDoc,
    mount: Mount,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpawnDoc {
    position: [f64; 3],
    yaw: f64,
    alpha: f64,
}

impl From<Scene> for SceneDoc {
    fn from(s: Scene) -> Self {
        let t = s.spawn.translation;
        SceneDoc {
            family: s.family,
            seed: s.seed,
            terrain: s.terrain,
            occluders: s.occluders,
            target: s.target_spec,
            spawn: SpawnDoc {
                position: [t.x, t.y, t.z],
                yaw: s.spawn.yaw(),
                alpha: s.spawn_alpha,
            },
            mount: s.mount,
        }
    }
}

impl TryFrom<SceneDoc> for Scene {
    type Error = Error;

    fn try_from(d: SceneDoc) -> Result<Self> {
        let p = d.spawn.position;
        Scene::new(
            d.family,
            d.seed,
            d.terrain,
            d.occluders,
            d.target,
            Pose::from_xyz_yaw(p[0], p[1], p[2], d.spawn.yaw),
            d.spawn.alpha,
            d.mount,
        )
    }
}

impl Scene {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        family: Family,
        seed: u64,
        terrain: Terrain,
        occluders: Vec<BoxOccluder>,
        target_spec: TargetSpec,
        spawn: Pose,
        spawn_alpha: f64,
        mount: Mount,
    ) -> Result<Self> {
        if !(spawn_alpha.abs() <= MAX_PITCH) {
            return Err(Error::PitchOutOfRange(spawn_alpha));
        }
        if occluders.len() > u16::MAX as usize {
            return Err(Error::InvalidArgument("too many occluders".into()));
        }
        let target = target_spec.mesh()?;
        let world = Arc::new(World::build(&terrain, &occluders, &target));
        Ok(Self {
            family,
            seed,
            terrain,
            occluders,
            target_spec,
            spawn,
            spawn_alpha,
            mount,
            target,
            world,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn spawn_camera(&self) -> Pose {
        camera_from_base(&self.spawn, self.spawn_alpha, &self.mount.pose())
            .expect("spawn pitch validated at construction")
    }

    pub fn target_centroid(&self) -> Vector3<f64> {
        self.target.centroid()
    }

    /// Same scene with a different obstacle list.
    pub fn with_occluders(&self, occluders: Vec<BoxOccluder>) -> Result<Scene> {
        Scene::new(
            self.family,
            self.seed,
            self.terrain.clone(),
            occluders,
            self.target_spec,
            self.spawn,
            self.spawn_alpha,
            self.mount,
        )
    }

    pub fn without_occluders(&self) -> Scene {
        self.with_occluders(Vec::new()).expect("target spec already validated")
    }

    /// Whether `p` lies strictly inside any obstacle.
    pub fn inside_obstacle(&self, p: &Vector3<f64>) -> bool {
        self.occluders.iter().any(|b| b.contains(p))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Scene> {
        Ok(serde_json::from_str(s)?)
    }
}
