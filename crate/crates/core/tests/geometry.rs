mod common;

use common::{geometry_suite, random_pose, rng, V3};
use nalgebra::Vector3;
use oanbv::geometry::{
    nearest_neighbor, orthonormality_error, render_depth, CameraIntrinsics, KdTree, PointCloud, Pose,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn config() -> ProptestConfig {
    ProptestConfig {
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

#[test]
fn invariant_suite_on_100_instances() {
    let fails = geometry_suite(100, &CameraIntrinsics::default());
    assert_eq!(fails, [0; 4], "round trip, group laws, nearest neighbor, lift_mask");
}

#[test]
fn compose_quarter_turns_by_hand() {
    let mut a = Pose::rot_z(std::f64::consts::FRAC_PI_2);
    a.translation = V3::new(1.0, 0.0, 0.0);
    let b = Pose::rot_z(std::f64::consts::FRAC_PI_2);
    let c = a.compose(&b);
    let expect = nalgebra::Matrix4::new(
        -1.0, 0.0, 0.0, 1.0, //
        0.0, -1.0, 0.0, 0.0, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    );
    assert!((c.to_matrix() - expect).abs().max() < 1e-12);
}

#[test]
fn projection_by_hand() {
    let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
    let (u, v, d) = k.project_to_pixel(&V3::new(1.0, 0.5, 2.0)).unwrap();
    assert_eq!((u, v), (570, 365));
    assert_eq!(d, 2.0);
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn rigid_motion_preserves_distance(seed in any::<u64>()) {
        let mut r = rng(seed);
        let t = random_pose(&mut r, std::f64::consts::PI, 10.0);
        let a = V3::new(r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), r.random_range(-5.0..5.0));
        let b = V3::new(r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), r.random_range(-5.0..5.0));
        prop_assert!(((t.transform_point(&a) - t.transform_point(&b)).norm() - (a - b).norm()).abs() <= 1e-9);
        prop_assert!(orthonormality_error(&t.rotation) <= 1e-9);
        prop_assert!((t.rotation.determinant() - 1.0).abs() <= 1e-9);
        let m = t.compose(&t.inverse()).to_matrix() - nalgebra::Matrix4::identity();
        prop_assert!(m.abs().max() <= 1e-9);
    }

    #[test]
    fn long_compose_chains_stay_rigid(seed in any::<u64>(), n in 1usize..200) {
        let mut r = rng(seed);
        let mut p = Pose::identity();
        for _ in 0..n {
            p = p.compose(&random_pose(&mut r, 0.3, 1.0));
        }
        prop_assert!(p.is_valid(1e-9));
    }

    #[test]
    fn kdtree_matches_linear_scan(seed in any::<u64>(), n in 1usize..600) {
        let mut r = rng(seed);
        let pts: Vec<V3> = (0..n)
            .map(|_| V3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
            .collect();
        let tree = KdTree::build(&pts);
        let cloud = PointCloud::new(pts.clone());
        for _ in 0..20 {
            let q = V3::new(r.random_range(-1.5..1.5), r.random_range(-1.5..1.5), r.random_range(-1.5..1.5));
            let brute = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (i, (p - q).norm_squared()))
                .fold((usize::MAX, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
            prop_assert_eq!(tree.nearest_sq(&q).unwrap().0, brute.0);
            prop_assert_eq!(nearest_neighbor(&q, &cloud).unwrap().0, brute.0);
            let k = r.random_range(1..10usize);
            let mut all: Vec<(usize, f64)> = pts.iter().enumerate().map(|(i, p)| (i, (p - q).norm_squared())).collect();
            all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let got: Vec<usize> = tree.knn(&q, k).iter().map(|x| x.0).collect();
            let want: Vec<usize> = all.iter().take(k).map(|x| x.0).collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn render_depth_ignores_point_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let k = CameraIntrinsics::new(60.0, 60.0, 32.0, 24.0, 64, 48).unwrap();
        let mut pts: Vec<V3> = (0..300)
            .map(|_| V3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..4.0)))
            .collect();
        let a = render_depth(&PointCloud::new(pts.clone()), &Pose::identity(), &k, 1);
        pts.shuffle(&mut r);
        let b = render_depth(&PointCloud::new(pts), &Pose::identity(), &k, 1);
        prop_assert_eq!(&a, &b);
        prop_assert!(a.depth.iter().all(|d| d.is_infinite() || *d > 0.0));
    }

    #[test]
    fn unproject_inverts_project(x in -3.0..3.0f64, y in -2.0..2.0f64, z in 0.1..20.0f64) {
        let k = CameraIntrinsics::default();
        let p = Vector3::new(x, y, z);
        let u = k.fx * x / z + k.cx;
        let v = k.fy * y / z + k.cy;
        prop_assert!((k.unproject(u, v, z) - p).norm() <= 1e-6);
    }
}
