use oanbv::geometry::{CameraIntrinsics, CameraView, PointLabel};
use oanbv::scene::{
    generate_scene, keypoint_visibility, occluded_vertex_fraction, render_observation, Family, Scene, SurfaceTag,
};

const FAMILIES: [Family; 2] = [Family::Indoor, Family::Outdoor];

#[test]
fn generation_is_a_pure_function_of_family_and_seed() {
    for f in FAMILIES {
        for seed in 0..5 {
            let a = generate_scene(f, seed).unwrap();
            let b = generate_scene(f, seed).unwrap();
            assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
            assert_eq!(a.target.vertices, b.target.vertices);
        }
        assert_ne!(
            generate_scene(f, 0).unwrap().to_json().unwrap(),
            generate_scene(f, 1).unwrap().to_json().unwrap()
        );
    }
}

#[test]
fn json_round_trip_rebuilds_the_scene() {
    for f in FAMILIES {
        let a = generate_scene(f, 11).unwrap();
        let b = Scene::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(a.target.vertices, b.target.vertices);
        assert_eq!(a.occluders, b.occluders);
        assert!((a.spawn.to_matrix() - b.spawn.to_matrix()).abs().max() < 1e-12);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }
}

#[test]
fn sampled_scenes_meet_their_constraints() {
    for f in FAMILIES {
        for seed in 0..20 {
            let s = generate_scene(f, seed).unwrap();
            let cam = s.spawn_camera();
            let frac = occluded_vertex_fraction(&s, &cam);
            assert!((0.2..=0.8).contains(&frac), "{f} {seed}: {frac}");
            for b in &s.occluders {
                let gap = s.target.vertices.iter().map(|v| b.signed_distance(v)).fold(f64::INFINITY, f64::min);
                assert!(gap >= 0.05, "{f} {seed}: gap {gap}");
            }
            assert!(!s.inside_obstacle(&cam.translation));
            assert!(!s.inside_obstacle(&s.spawn.translation));
            assert!(s.spawn_alpha.abs() <= 0.75);
            // the base stands at its standing height above the ground
            let t = s.spawn.translation;
            let ground = s.terrain.height_at(t.x, t.y).unwrap();
            assert!((t.z - ground - 0.3).abs() < 1e-9);
        }
    }
}

#[test]
fn observation_points_lie_on_their_rays() {
    let k = CameraIntrinsics::default();
    for f in FAMILIES {
        let s = generate_scene(f, 4).unwrap();
        let cam = s.spawn_camera();
        let obs = render_observation(&s, &cam, &k, 2);
        assert!(obs.cloud.check_invariants());
        assert_eq!(obs.cloud.len(), obs.pixels.len());
        assert!(obs.cloud.len() <= obs.ray_count());
        assert_eq!(obs.ray_count(), 320 * 240);
        let view = CameraView::new(&cam);
        let world = s.world();
        let mut targets = 0;
        for (i, (p, px)) in obs.cloud.points.iter().zip(&obs.pixels).enumerate() {
            assert!(p.z > 0.0);
            // the point projects back to the center of its pixel
            let u = k.fx * p.x / p.z + k.cx;
            let v = k.fy * p.y / p.z + k.cy;
            assert!((u - (px[0] as f64 + 0.5)).abs() < 1e-6 && (v - (px[1] as f64 + 0.5)).abs() < 1e-6);
            assert_eq!(px[0] % 2, 0);
            assert_eq!(px[1] % 2, 0);
            // nothing lies strictly between the camera and the recorded hit
            let w = view.to_world(p);
            let d = w - view.position;
            let short = view.position + d * (1.0 - 1e-4);
            assert!(!world.segment_blocked(&view.position, &short, |_, _| true));
            if obs.cloud.label(i) == Some(PointLabel::Target) {
                targets += 1;
                assert!(obs.gt_mask.at_pixel(px[0] as usize, px[1] as usize));
            }
        }
        assert_eq!(targets, obs.gt_mask.count());
        assert!(targets > 0);
    }
}

#[test]
fn removing_occluders_never_hides_a_keypoint() {
    let k = CameraIntrinsics::default();
    let mut gained = 0;
    for f in FAMILIES {
        for seed in 0..20 {
            let s = generate_scene(f, seed).unwrap();
            let cam = s.spawn_camera();
            let with = keypoint_visibility(&s, &cam, &k);
            let without = keypoint_visibility(&s.without_occluders(), &cam, &k);
            for (a, b) in with.iter().zip(&without) {
                assert!(!a || *b, "{f} {seed}");
                gained += (*b && !a) as usize;
            }
        }
    }
    assert!(gained > 0);
}

#[test]
fn world_tags_target_triangles_by_part() {
    let s = generate_scene(Family::Indoor, 0).unwrap();
    let c = s.target_centroid();
    let from = c + nalgebra::Vector3::new(3.0, 0.0, 0.0);
    let ray = oanbv::geometry::Ray::between(&from, &c);
    let hit = s.world().first_hit(&ray, 1.0).expect("target in the way");
    assert!(matches!(hit.tag, SurfaceTag::Target(_)));
}
