//! The iterative NBV loop, its metrics, the weight sweep, the two ablations
//! and aggregation over trial records.

mod ablation;
mod aggregate;
mod sweep;
mod trial;

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub use ablation::{
    ablation_alignment, ablation_viewpoint_gen, write_alignment_csv, write_viewpoint_csv, AlignmentAblationRow,
    AlignmentSummary, Sampler, Setting, ViewpointAblationRow, ViewpointSummary,
};
pub use aggregate::{aggregate, write_aggregate_csv, AggregateRow, IterationSummary};
pub use sweep::{
    sweep_cells, sweep_select, sweep_trial, weight_sweep, write_sweep_cells_csv, write_sweep_grid_csv, SweepCell,
    SweepResult, SweepTrial, SNR_SENTINEL,
};
pub use trial::{elevation_candidates, execute_on_ground, run_suite, run_trial, write_trials_csv, IterationRecord, PlanningMesh, TrialRecord};

use crate::alignment::{align_target, mpvpe, perturb_initial_mesh, visible_parts_noisy, AlignParams, PerturbParams};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, CameraView, PointLabel, Pose};
use crate::rng::{derive_seed, tag};
use crate::scene::{
    oracle_detection, render_observation, DetectionThresholds, LabeledMesh, Observation, Scene, DEFAULT_STRIDE,
    NUM_KEYPOINTS,
};
use crate::scoring::{CompletionParams, EvalParams, Weights, DEFAULT_RAY_BUDGET};
use crate::viewpoints::{default_shell_radii, SamplerParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    OaNbv,
    Volumetric,
    Pred,
    ShellOa,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::OaNbv, Method::Volumetric, Method::Pred, Method::ShellOa];

    pub fn name(self) -> &'static str {
        match self {
            Method::OaNbv => "oa_nbv",
            Method::Volumetric => "volumetric",
            Method::Pred => "pred",
            Method::ShellOa => "shell_oa",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown method '{s}' (expected oa_nbv, volumetric, pred or shell_oa)")))
    }
}

/// Points the occlusion-aware evaluator depth-tests against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccluderCloud {
    /// Background points only: the target never occludes itself.
    Background,
    /// Target and background points.
    All,
}

/// Every knob of one NBV trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialParams {
    pub iterations: usize,
    pub weights: Weights,
    pub intrinsics: CameraIntrinsics,
    pub stride: usize,
    pub sampler: SamplerParams,
    pub h_step: f64,
    pub eval: EvalParams,
    pub occluders: OccluderCloud,
    pub detection: DetectionThresholds,
    pub align: AlignParams,
    pub perturb: PerturbParams,
    /// Minimum visible fraction for a part to count as seen.
    pub part_threshold: f64,
    /// Probability of flipping each part's membership.
    pub part_flip_prob: f64,
    pub completion: CompletionParams,
    pub ray_budget: usize,
    pub shell_radii: Vec<f64>,
    pub shell_per_radius: usize,
}

impl Default for TrialParams {
    fn default() -> Self {
        Self {
            iterations: 5,
            weights: Weights::default(),
            intrinsics: CameraIntrinsics::default(),
            stride: DEFAULT_STRIDE,
            sampler: SamplerParams::default(),
            h_step: crate::elevation::DEFAULT_H_STEP,
            eval: EvalParams::default(),
            occluders: OccluderCloud::Background,
            detection: DetectionThresholds::default(),
            align: AlignParams::default(),
            perturb: PerturbParams::default(),
            part_threshold: 0.25,
            part_flip_prob: 0.0,
            completion: CompletionParams::default(),
            ray_budget: DEFAULT_RAY_BUDGET,
            shell_radii: default_shell_radii(),
            shell_per_radius: 100,
        }
    }
}

impl TrialParams {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.sampler.validate()?;
        if self.stride == 0 {
            return Err(Error::InvalidArgument("stride must be positive".into()));
        }
        if !(self.h_step > 0.0) {
            return Err(Error::InvalidArgument("h_step must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.part_threshold) || !(0.0..=1.0).contains(&self.part_flip_prob) {
            return Err(Error::InvalidArgument("part threshold and flip probability must lie in [0, 1]".into()));
        }
        if !(self.eval.depth_margin >= 0.0 && self.eval.depth_margin < 1.0) {
            return Err(Error::InvalidArgument("depth margin must lie in [0, 1)".into()));
        }
        if !(self.completion.fraction > 0.0 && self.completion.fraction <= 1.0) || self.completion.jitter < 0.0 {
            return Err(Error::InvalidArgument("completion fraction must lie in (0, 1] with jitter >= 0".into()));
        }
        if self.shell_radii.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidArgument("shell radii must be positive".into()));
        }
        Ok(())
    }
}

/// `(A, R_vis)` of an observation; both zero when detection failed.
pub fn compute_metrics(obs: &Observation, detected: bool) -> (f64, f64) {
    if !detected {
        return (0.0, 0.0);
    }
    (obs.gt_mask.area_fraction(), obs.visible_keypoints() as f64 / NUM_KEYPOINTS as f64)
}

/// Where the mesh hypothesis of a view came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisSource {
    /// Aligned on this view.
    Aligned,
    /// Alignment skipped or degenerate; the unaligned initial mesh was kept.
    Unaligned,
    /// Detection failed; no mesh from this view.
    None,
}

/// Everything the planner learns from one view.
#[derive(Debug, Clone)]
pub struct Perception {
    pub obs: Observation,
    pub detected: bool,
    pub area: f64,
    pub r_vis: f64,
    /// World-frame mesh hypothesis from this view, if detection succeeded.
    pub hypothesis: Option<LabeledMesh>,
    pub source: HypothesisSource,
    pub mpvpe: Option<f64>,
    /// Initial (unaligned) mesh hypothesis in the world frame.
    pub init_mesh: LabeledMesh,
}

impl Perception {
    /// Observed cloud in the world frame.
    pub fn world_points(&self) -> Vec<Vector3<f64>> {
        let view = self.obs.view();
        self.obs.cloud.points.iter().map(|p| view.to_world(p)).collect()
    }

    /// Depth-test points for the occlusion-aware evaluator.
    pub fn occluder_points(&self, which: OccluderCloud) -> Vec<Vector3<f64>> {
        match which {
            OccluderCloud::All => self.world_points(),
            OccluderCloud::Background => {
                let view = self.obs.view();
                self.obs
                    .cloud
                    .points_labeled(PointLabel::Background)
                    .iter()
                    .map(|p| view.to_world(p))
                    .collect()
            }
        }
    }

    /// Observed target points (oracle mask) in the world frame.
    pub fn world_target_points(&self) -> Vec<Vector3<f64>> {
        let view = self.obs.view();
        self.obs
            .cloud
            .points_labeled(PointLabel::Target)
            .iter()
            .map(|p| view.to_world(p))
            .collect()
    }
}

/// World pose taking optical-frame coordinates of `view` to the world.
pub(crate) fn world_from_optical(view: &CameraView) -> Pose {
    Pose::new(view.rot.transpose(), -(view.rot.transpose() * view.trans))
}

/// Render, detect, and when detected recover a mesh hypothesis by aligning
/// the perturbed ground-truth mesh.
pub fn perceive(scene: &Scene, cam: &Pose, p: &TrialParams, seed: u64) -> Result<Perception> {
    let obs = render_observation(scene, cam, &p.intrinsics, p.stride);
    let detected = oracle_detection(&obs, &p.detection);
    let (area, r_vis) = compute_metrics(&obs, detected);
    let (init_mesh, _) = perturb_initial_mesh(&scene.target, cam, derive_seed(seed, &[tag::PERTURB]), &p.perturb)?;
    let mut out = Perception {
        obs,
        detected,
        area,
        r_vis,
        hypothesis: None,
        source: HypothesisSource::None,
        mpvpe: None,
        init_mesh,
    };
    if !detected {
        return Ok(out);
    }
    let view = out.obs.view();
    let to_world = world_from_optical(&view);
    let to_optical = to_world.inverse();
    let init_optical = out.init_mesh.transformed(&to_optical);
    let parts = visible_parts_noisy(
        scene,
        cam,
        &p.intrinsics,
        p.part_threshold,
        p.part_flip_prob,
        derive_seed(seed, &[tag::PARTS]),
    );
    let aligned = align_target(&out.obs, &init_optical, &parts, &p.align, derive_seed(seed, &[tag::SEGMENT]))?;
    out.source = if aligned.skipped || aligned.degenerate {
        HypothesisSource::Unaligned
    } else {
        HypothesisSource::Aligned
    };
    let mesh = aligned.aligned.transformed(&to_world);
    out.mpvpe = Some(mpvpe(&mesh, &scene.target)?);
    out.hypothesis = Some(mesh);
    Ok(out)
}

/// Seed of iteration `it` of a trial; shared by every method so that the
/// sampler draws identical candidate sets from identical states.
pub fn iteration_seed(trial_seed: u64, it: usize) -> u64 {
    derive_seed(trial_seed, &[tag::TRIAL, it as u64])
}
