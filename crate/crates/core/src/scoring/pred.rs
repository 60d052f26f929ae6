use nalgebra::Vector3;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{visibility_counts, EvalParams};
use crate::geometry::{CameraIntrinsics, CameraView, KdTree};
use crate::scene::LabeledMesh;
use crate::viewpoints::CandidateView;

/// Predicted points closer than this to an observed target point are not new.
pub const NOVELTY_RADIUS: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompletionParams {
    pub fraction: f64,
    pub jitter: f64,
}

impl Default for CompletionParams {
    fn default() -> Self {
        Self {
            fraction: 0.3,
            jitter: 0.03,
        }
    }
}

/// Shape-completion stand-in: a seeded subsample of the true mesh vertices
/// with Gaussian jitter.
pub fn oracle_completion(gt: &LabeledMesh, p: &CompletionParams, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = gt.len();
    let take = ((n as f64 * p.fraction).round() as usize).min(n);
    let mut idx = index::sample(&mut rng, n, take).into_vec();
    idx.sort_unstable();
    let noise = (p.jitter > 0.0).then(|| Normal::new(0.0, p.jitter).expect("positive jitter"));
    idx.into_iter()
        .map(|i| {
            let mut v = gt.vertices[i];
            if let Some(n) = &noise {
                v += Vector3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng));
            }
            v
        })
        .collect()
}

/// Predicted points farther than the novelty radius from every observed
/// target point.
pub fn novel_points(predicted: &[Vector3<f64>], observed_target: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    if observed_target.is_empty() {
        return predicted.to_vec();
    }
    let tree = KdTree::build(observed_target);
    predicted
        .iter()
        .filter(|p| tree.nearest(p).is_none_or(|(_, d)| d > NOVELTY_RADIUS))
        .copied()
        .collect()
}

/// Number of not-yet-observed predicted points the candidate would see
/// unoccluded by the observed scene.
pub fn pred_gain(
    cand: &CandidateView,
    predicted: &[Vector3<f64>],
    observed_scene: &[Vector3<f64>],
    observed_target: &[Vector3<f64>],
    k: &CameraIntrinsics,
    params: &EvalParams,
) -> usize {
    let novel = novel_points(predicted, observed_target);
    let (n_in, n_occ) = visibility_counts(&CameraView::new(&cand.cam), &novel, observed_scene, k, params);
    n_in - n_occ
}
