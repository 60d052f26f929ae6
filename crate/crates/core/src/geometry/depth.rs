use nalgebra::Vector3;

use super::{CameraIntrinsics, CameraView, PointCloud, Pose};

/// Per-pixel nearest depth; `f64::INFINITY` marks an empty pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
}

impl DepthImage {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depth: vec![f64::INFINITY; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let d = self.depth[y * self.width + x];
        d.is_finite().then_some(d)
    }

    /// Keep the minimum of the stored and offered depth.
    #[inline]
    pub fn splat_min(&mut self, x: usize, y: usize, d: f64) {
        let slot = &mut self.depth[y * self.width + x];
        if d < *slot {
            *slot = d;
        }
    }

    pub fn filled_count(&self) -> usize {
        self.depth.iter().filter(|d| d.is_finite()).count()
    }
}

/// Rectangular pixel window, inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

/// Pixels covered by a splat of `radius` (Chebyshev) centered on the floored
/// projection `(u, v)`, clipped to the image. `None` if nothing lands in frame.
#[inline]
pub fn splat_footprint(u: f64, v: f64, radius: usize, width: usize, height: usize) -> Option<PixelRect> {
    if !(u.is_finite() && v.is_finite()) {
        return None;
    }
    let r = radius as f64;
    let (fu, fv) = (u.floor(), v.floor());
    let (lo_u, hi_u) = (fu - r, fu + r);
    let (lo_v, hi_v) = (fv - r, fv + r);
    if hi_u < 0.0 || hi_v < 0.0 || lo_u >= width as f64 || lo_v >= height as f64 {
        return None;
    }
    Some(PixelRect {
        x0: lo_u.max(0.0) as usize,
        y0: lo_v.max(0.0) as usize,
        x1: (hi_u as usize).min(width - 1),
        y1: (hi_v as usize).min(height - 1),
    })
}

/// Splat every point with positive camera depth into a depth image; the
/// minimum depth wins per pixel. `cam` is the body-convention camera pose in
/// the same frame as `points`.
pub fn render_depth(points: &PointCloud, cam: &Pose, k: &CameraIntrinsics, splat_radius: usize) -> DepthImage {
    let view = CameraView::new(cam);
    let mut img = DepthImage::empty(k.width, k.height);
    for p in &points.points {
        splat_point(&mut img, k, &view.to_optical(p), splat_radius);
    }
    img
}

#[inline]
fn splat_point(img: &mut DepthImage, k: &CameraIntrinsics, q: &Vector3<f64>, radius: usize) {
    if q.z <= 0.0 {
        return;
    }
    let u = k.fx * q.x / q.z + k.cx;
    let v = k.fy * q.y / q.z + k.cy;
    if let Some(r) = splat_footprint(u, v, radius, k.width, k.height) {
        for y in r.y0..=r.y1 {
            for x in r.x0..=r.x1 {
                img.splat_min(x, y, q.z);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::default()
    }

    // optical (x right, y down, z fwd) -> body (x fwd, y left, z up)
    fn body(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(z, -x, -y)
    }

    #[test]
    fn empty_cloud_renders_empty() {
        let img = render_depth(&PointCloud::default(), &Pose::identity(), &k(), 1);
        assert_eq!(img.filled_count(), 0);
    }

    #[test]
    fn single_point_fills_three_by_three_block() {
        let cloud = PointCloud::new(vec![body(0.0, 0.0, 2.0)]);
        let img = render_depth(&cloud, &Pose::identity(), &k(), 1);
        assert_eq!(img.filled_count(), 9);
        for y in 239..=241 {
            for x in 319..=321 {
                assert_eq!(img.get(x, y), Some(2.0));
            }
        }
    }

    #[test]
    fn nearest_point_on_ray_wins() {
        let cloud = PointCloud::new(vec![body(0.0, 0.0, 3.0), body(0.0, 0.0, 2.0)]);
        let img = render_depth(&cloud, &Pose::identity(), &k(), 0);
        assert_eq!(img.get(320, 240), Some(2.0));
    }

    #[test]
    fn points_behind_are_ignored() {
        let cloud = PointCloud::new(vec![body(0.0, 0.0, -2.0)]);
        assert_eq!(render_depth(&cloud, &Pose::identity(), &k(), 1).filled_count(), 0);
    }

    #[test]
    fn splat_reaches_into_frame_from_just_outside() {
        let r = splat_footprint(-0.5, 10.2, 1, 640, 480).unwrap();
        assert_eq!((r.x0, r.x1, r.y0, r.y1), (0, 0, 9, 11));
        assert!(splat_footprint(-1.5, 10.0, 1, 640, 480).is_none());
    }

    proptest! {
        #[test]
        fn permutation_invariant(pts in prop::collection::vec(prop::array::uniform3(-2.0f64..2.0), 1..60),
                                 shift in 0usize..60) {
            let pts: Vec<_> = pts.into_iter().map(|p| body(p[0], p[1], p[2] + 2.5)).collect();
            let mut rotated = pts.clone();
            let s = shift % rotated.len();
            rotated.rotate_left(s);
            rotated.reverse();
            let a = render_depth(&PointCloud::new(pts), &Pose::identity(), &k(), 1);
            let b = render_depth(&PointCloud::new(rotated), &Pose::identity(), &k(), 1);
            prop_assert_eq!(a, b);
        }
    }
}
