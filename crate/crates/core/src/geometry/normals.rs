use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::{KdTree, PointCloud};
use crate::error::{Error, Result};

/// Ratio of the middle to the largest covariance eigenvalue below which a
/// neighborhood is treated as rank-deficient.
const RANK_TOL: f64 = 1e-10;

pub const DEFAULT_NORMAL_K: usize = 16;

/// Estimate per-point normals from the `k` nearest neighbors (the point
/// itself included), oriented toward `sensor`. Degenerate neighborhoods
/// produce `None`.
pub fn estimate_normals(cloud: &PointCloud, k: usize, sensor: &Vector3<f64>) -> Result<PointCloud> {
    if k < 3 {
        return Err(Error::InvalidArgument(format!("normal estimation needs k >= 3, got {k}")));
    }
    if cloud.len() < k {
        return Err(Error::InvalidArgument(format!(
            "normal estimation needs at least {k} points, got {}",
            cloud.len()
        )));
    }
    let tree = KdTree::build(&cloud.points);
    let normals = cloud
        .points
        .iter()
        .map(|p| {
            let nbrs = tree.knn(p, k);
            let n = plane_normal(nbrs.iter().map(|&(i, _)| cloud.points[i]))?;
            Some(if n.dot(&(sensor - p)) < 0.0 { -n } else { n })
        })
        .collect();
    let mut out = cloud.clone();
    out.set_normals(normals)?;
    Ok(out)
}

/// Smallest-eigenvalue eigenvector of the neighborhood covariance.
pub fn plane_normal(points: impl Iterator<Item = Vector3<f64>> + Clone) -> Option<Vector3<f64>> {
    let n = points.clone().count();
    if n < 3 {
        return None;
    }
    let mean = points.clone().sum::<Vector3<f64>>() / n as f64;
    let cov = points.fold(Matrix3::zeros(), |acc, p| {
        let d = p - mean;
        acc + d * d.transpose()
    }) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (mid, max) = (eig.eigenvalues[idx[1]], eig.eigenvalues[idx[2]]);
    if max <= 0.0 || mid <= RANK_TOL * max {
        return None;
    }
    let v = eig.eigenvectors.column(idx[0]).into_owned();
    let norm = v.norm();
    (norm > 0.0).then(|| v / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn planar_points_face_sensor() {
        let pts: Vec<_> = (0..20)
            .flat_map(|i| (0..20).map(move |j| Vector3::new(i as f64 * 0.1, j as f64 * 0.1, 0.0)))
            .collect();
        let out = estimate_normals(&PointCloud::new(pts), 16, &Vector3::new(0.5, 0.5, 5.0)).unwrap();
        for n in out.normals.unwrap() {
            let n = n.unwrap();
            assert!((n - Vector3::z()).norm() < 1e-3);
        }
    }

    #[test]
    fn sphere_normals_are_radial() {
        // visible cap of the unit sphere seen from (0, 0, 5), Fibonacci sampled
        let sensor = Vector3::new(0.0, 0.0, 5.0);
        let golden = PI * (3.0 - 5f64.sqrt());
        let pts: Vec<_> = (0..3000)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / 3000.0;
                let r = (1.0 - z * z).sqrt();
                let t = golden * i as f64;
                Vector3::new(r * t.cos(), r * t.sin(), z)
            })
            .filter(|p| p.z > 0.2)
            .collect();
        let out = estimate_normals(&PointCloud::new(pts.clone()), 16, &sensor).unwrap();
        for (p, n) in pts.iter().zip(out.normals.unwrap()) {
            let angle = n.unwrap().dot(p).clamp(-1.0, 1.0).acos();
            assert!(angle < 5f64.to_radians(), "angle {angle}");
        }
    }

    #[test]
    fn collinear_points_flag_invalid() {
        let pts = vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0), Vector3::new(2.0, 0.0, 0.0)];
        let out = estimate_normals(&PointCloud::new(pts), 3, &Vector3::z()).unwrap();
        assert!(out.normals.unwrap().iter().all(|n| n.is_none()));
    }

    #[test]
    fn too_few_points_rejected() {
        let pts = vec![Vector3::zeros(), Vector3::x()];
        assert!(estimate_normals(&PointCloud::new(pts), 3, &Vector3::z()).is_err());
    }
}
