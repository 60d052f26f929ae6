//! Point-to-plane ICP with a truncated least-squares objective.

use nalgebra::{Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{KdTree, PointCloud, Pose};

const MIN_CORRESPONDENCES: usize = 6;
const MIN_TARGET_NORMALS: usize = 10;
const MAX_BACKTRACKS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpParams {
    pub max_iter: usize,
    pub max_corr: f64,
    pub tol: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iter: 50,
            max_corr: 0.3,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IcpResult {
    /// Correction applied after `init`: the registered source is
    /// `transform ∘ init` applied to the raw source points.
    pub transform: Pose,
    /// Root of the truncated mean squared point-to-plane residual, one entry
    /// for the initial state and one per accepted iteration.
    pub residual_history: Vec<f64>,
    pub iterations: usize,
}

struct Target<'a> {
    tree: KdTree,
    normals: Vec<Vector3<f64>>,
    points: &'a [Vector3<f64>],
}

impl Target<'_> {
    /// Truncated objective and the inlier correspondences `(source, point, normal)`.
    fn evaluate(&self, src: &[Vector3<f64>], max_corr: f64) -> (f64, Vec<(usize, usize)>) {
        let cap = max_corr * max_corr;
        let mut total = 0.0;
        let mut pairs = Vec::with_capacity(src.len());
        for (i, p) in src.iter().enumerate() {
            match self.tree.nearest_sq(p) {
                Some((j, d2)) if d2 <= cap => {
                    let r = (p - self.points[j]).dot(&self.normals[j]);
                    total += (r * r).min(cap);
                    pairs.push((i, j));
                }
                _ => total += cap,
            }
        }
        (total / src.len() as f64, pairs)
    }
}

/// Register `source` (after applying `init`) to `target`, which must carry
/// normals. Target points without a valid normal are ignored.
pub fn point_to_plane_icp(
    source: &[Vector3<f64>],
    target: &PointCloud,
    init: &Pose,
    params: &IcpParams,
) -> Result<IcpResult> {
    if source.is_empty() {
        return Err(Error::InvalidArgument("ICP source is empty".into()));
    }
    let normals = target
        .normals
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("ICP target has no normals".into()))?;
    let (pts, nrm): (Vec<_>, Vec<_>) = target
        .points
        .iter()
        .zip(normals)
        .filter_map(|(p, n)| n.map(|n| (*p, n)))
        .unzip();
    if pts.len() < MIN_TARGET_NORMALS {
        return Err(Error::InvalidArgument(format!(
            "ICP target has {} points with valid normals (need {MIN_TARGET_NORMALS})",
            pts.len()
        )));
    }
    let tgt = Target {
        tree: KdTree::build(&pts),
        normals: nrm,
        points: &pts,
    };

    let mut current: Vec<Vector3<f64>> = source.iter().map(|p| init.transform_point(p)).collect();
    let mut transform = Pose::identity();
    let (mut cost, mut pairs) = tgt.evaluate(&current, params.max_corr);
    let mut history = vec![cost.sqrt()];
    let mut iterations = 0;

    for _ in 0..params.max_iter {
        if pairs.len() < MIN_CORRESPONDENCES {
            return Err(Error::DegenerateRegistration(pairs.len()));
        }
        iterations += 1;
        let Some(twist) = solve_step(&current, &tgt, &pairs) else {
            break;
        };
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let step = twist_pose(&(twist * scale));
            let moved: Vec<_> = current.iter().map(|p| step.transform_point(p)).collect();
            let (c, pr) = tgt.evaluate(&moved, params.max_corr);
            if c <= cost {
                accepted = Some((step, moved, c, pr));
                break;
            }
            scale *= 0.5;
        }
        let Some((step, moved, c, pr)) = accepted else {
            break;
        };
        transform = step.compose(&transform);
        current = moved;
        let improvement = cost.sqrt() - c.sqrt();
        cost = c;
        pairs = pr;
        history.push(cost.sqrt());
        if improvement < params.tol {
            break;
        }
    }
    Ok(IcpResult {
        transform,
        residual_history: history,
        iterations,
    })
}

/// Small-angle linearized least squares for `(omega, t)`.
fn solve_step(src: &[Vector3<f64>], tgt: &Target, pairs: &[(usize, usize)]) -> Option<Vector6<f64>> {
    let mut a = Matrix6::<f64>::zeros();
    let mut b = Vector6::<f64>::zeros();
    for &(i, j) in pairs {
        let p = src[i];
        let n = tgt.normals[j];
        let r = (p - tgt.points[j]).dot(&n);
        let c = p.cross(&n);
        let row = Vector6::new(c.x, c.y, c.z, n.x, n.y, n.z);
        a += row * row.transpose();
        b -= row * r;
    }
    // tiny ridge keeps sliding directions of symmetric shapes bounded
    let ridge = 1e-9 * a.trace().max(1e-12);
    for k in 0..6 {
        a[(k, k)] += ridge;
    }
    let x = a.cholesky().map(|c| c.solve(&b))?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn twist_pose(x: &Vector6<f64>) -> Pose {
    Pose::from_axis_angle(&Vector3::new(x[0], x[1], x[2]), Vector3::new(x[3], x[4], x[5]))
}
