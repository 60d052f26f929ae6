use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::Pose;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointLabel {
    Target,
    Background,
}

/// 3D points with optional per-point labels and normals.
///
/// A normal entry of `None` marks a point whose neighborhood was degenerate;
/// such points are skipped by registration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub labels: Option<Vec<PointLabel>>,
    pub normals: Option<Vec<Option<Vector3<f64>>>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self {
            points,
            labels: None,
            normals: None,
        }
    }

    pub fn with_labels(points: Vec<Vector3<f64>>, labels: Vec<PointLabel>) -> Result<Self> {
        if labels.len() != points.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} points",
                labels.len(),
                points.len()
            )));
        }
        Ok(Self {
            points,
            labels: Some(labels),
            normals: None,
        })
    }

    pub fn set_normals(&mut self, normals: Vec<Option<Vector3<f64>>>) -> Result<()> {
        if normals.len() != self.points.len() {
            return Err(Error::InvalidArgument(format!(
                "{} normals for {} points",
                normals.len(),
                self.points.len()
            )));
        }
        self.normals = Some(normals);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn label(&self, i: usize) -> Option<PointLabel> {
        self.labels.as_ref().map(|l| l[i])
    }

    pub fn normal(&self, i: usize) -> Option<Vector3<f64>> {
        self.normals.as_ref().and_then(|n| n[i])
    }

    /// Points carrying the given label.
    pub fn points_labeled(&self, label: PointLabel) -> Vec<Vector3<f64>> {
        match &self.labels {
            Some(l) => self
                .points
                .iter()
                .zip(l)
                .filter(|(_, &lab)| lab == label)
                .map(|(p, _)| *p)
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn transformed(&self, pose: &Pose) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| pose.transform_point(p)).collect(),
            labels: self.labels.clone(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| n.map(|n| pose.transform_vector(&n))).collect()),
        }
    }

    pub fn centroid(&self) -> Option<Vector3<f64>> {
        centroid(&self.points)
    }

    /// Concatenate clouds; labels/normals survive only if every input carries them.
    pub fn concat(parts: &[&PointCloud]) -> PointCloud {
        let points = parts.iter().flat_map(|c| c.points.iter().copied()).collect();
        let labels = if parts.iter().all(|c| c.labels.is_some()) {
            Some(parts.iter().flat_map(|c| c.labels.as_ref().unwrap().iter().copied()).collect())
        } else {
            None
        };
        let normals = if parts.iter().all(|c| c.normals.is_some()) {
            Some(parts.iter().flat_map(|c| c.normals.as_ref().unwrap().iter().copied()).collect())
        } else {
            None
        };
        PointCloud {
            points,
            labels,
            normals,
        }
    }

    pub fn check_invariants(&self) -> bool {
        let n = self.points.len();
        self.labels.as_ref().is_none_or(|l| l.len() == n)
            && self.normals.as_ref().is_none_or(|ns| {
                ns.len() == n && ns.iter().flatten().all(|v| (v.norm() - 1.0).abs() < 1e-6)
            })
    }
}

pub fn centroid(points: &[Vector3<f64>]) -> Option<Vector3<f64>> {
    if points.is_empty() {
        return None;
    }
    Some(points.iter().sum::<Vector3<f64>>() / points.len() as f64)
}
