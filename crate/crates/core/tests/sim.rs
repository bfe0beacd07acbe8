use std::sync::{Arc, LazyLock};

use bladeassist::fixtures::{self, STUDY_SERIALS};
use bladeassist::sim::mesh::{box_mesh, point_triangle_distance};
use bladeassist::sim::{
    add_noise, format_scenario, parse_scenario, render_cloud, synth_detection, ScenarioScript, ScriptAction,
    ScriptEvent, SimEvent, Simulator, TriangleMesh,
};
use bladeassist::{CameraConfig, Frame, RigidTransform};
use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

static MESH: LazyLock<Arc<TriangleMesh>> = LazyLock::new(|| Arc::new(fixtures::blade_mesh()));

fn small_rotation() -> impl Strategy<Value = UnitQuaternion<f64>> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -0.5..0.5f64)
        .prop_filter("axis", |(x, y, z, _)| x * x + y * y + z * z > 0.01)
        .prop_map(|(x, y, z, a)| UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::new(x, y, z)), a))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn moving_part_and_camera_together_changes_nothing(
        seed in 0u64..1000,
        q in small_rotation(),
        t in (-0.3..0.3f64, -0.3..0.3f64, -0.3..0.3f64),
    ) {
        let mesh = &**MESH;
        let cam = fixtures::workstation_cameras().remove(0);
        let pose = fixtures::random_pose(&mut ChaCha8Rng::seed_from_u64(seed), mesh);
        let g = RigidTransform::from_quaternion(&q, Vector3::new(t.0, t.1, t.2), Frame::World, Frame::World);
        let moved_cam = CameraConfig::new(cam.id.clone(), cam.intrinsics, cam.world_to_camera.compose(&g.inverse()).unwrap()).unwrap();
        let moved_pose = g.compose(&pose).unwrap();

        let a = render_cloud(mesh, &pose, &cam, 8).unwrap().transformed(&cam.world_to_camera).unwrap();
        let b = render_cloud(mesh, &moved_pose, &moved_cam, 8).unwrap().transformed(&moved_cam.world_to_camera).unwrap();
        prop_assert_eq!(a.len(), b.len());
        prop_assert!(a.points().iter().zip(b.points()).all(|(p, q)| (p - q).norm() < 1e-9));

        let da = synth_detection(mesh, &pose, &cam, 8.0).unwrap();
        let db = synth_detection(mesh, &moved_pose, &moved_cam, 8.0).unwrap();
        prop_assert!((da.u_min - db.u_min).abs() < 1e-6 && (da.v_max - db.v_max).abs() < 1e-6);
    }

    #[test]
    fn rendered_points_lie_on_the_surface(seed in 0u64..1000) {
        let mesh = &**MESH;
        let cam = fixtures::workstation_cameras().remove(1);
        let pose = fixtures::random_pose(&mut ChaCha8Rng::seed_from_u64(seed), mesh);
        let cloud = render_cloud(mesh, &pose, &cam, 16).unwrap();
        prop_assert!(!cloud.is_empty());
        let inv = pose.inverse();
        for p in cloud.points() {
            let o = inv.apply(p);
            let d = (0..mesh.triangles().len())
                .map(|i| {
                    let [a, b, c] = mesh.triangle(i);
                    point_triangle_distance(&o, &a, &b, &c)
                })
                .fold(f64::INFINITY, f64::min);
            prop_assert!(d < 1e-9, "{d}");
        }
    }

    #[test]
    fn surface_samples_lie_on_the_box(seed in 0u64..1000, spacing in 0.005..0.05f64) {
        let (lo, hi) = (Vector3::new(-0.1, -0.05, 0.0), Vector3::new(0.1, 0.05, 0.02));
        let cloud = box_mesh(lo, hi).sample_surface(spacing, seed);
        prop_assert!(!cloud.is_empty());
        for (p, n) in cloud.points().iter().zip(cloud.normals().unwrap()) {
            let on_face = (0..3).any(|k| (p[k] - lo[k]).abs() < 1e-12 || (p[k] - hi[k]).abs() < 1e-12);
            let inside = (0..3).all(|k| p[k] >= lo[k] - 1e-12 && p[k] <= hi[k] + 1e-12);
            prop_assert!(on_face && inside);
            prop_assert!((n.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn scenario_text_round_trips(
        noise in 0.0..0.01f64,
        seed in any::<u64>(),
        steps in prop::collection::vec((0.0..10.0f64, 0u8..3, any::<bool>()), 0..15),
        q in small_rotation(),
    ) {
        let mut time = 0.0;
        let events = steps
            .into_iter()
            .map(|(dt, kind, flag)| {
                time += dt;
                let action = match kind {
                    0 => ScriptAction::Scan { serial: "SN-7".into() },
                    1 => ScriptAction::Hands { present: flag },
                    _ => ScriptAction::Place {
                        serial: "SN-7".into(),
                        pose: RigidTransform::from_quaternion(&q, Vector3::new(dt, -dt, 0.5), Frame::Object, Frame::World),
                    },
                };
                ScriptEvent { time, action }
            })
            .collect();
        let script = ScenarioScript { noise_sigma: noise, cameras: vec!["a".into(), "b".into()], seed, events };
        let back = parse_scenario(&format_scenario(&script)).unwrap();
        prop_assert_eq!(back, script);
    }
}

#[test]
fn noise_is_seeded_and_has_the_requested_spread() {
    let cloud = MESH.sample_surface(0.002, 1);
    let a = add_noise(&cloud, 0.001, 9).unwrap();
    let b = add_noise(&cloud, 0.001, 9).unwrap();
    assert_eq!(a.points(), b.points());
    assert_ne!(a.points(), add_noise(&cloud, 0.001, 10).unwrap().points());
    let d: Vec<f64> = a.points().iter().zip(cloud.points()).flat_map(|(p, q)| (p - q).iter().copied().collect::<Vec<_>>()).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() < 5.0 * 0.001 / n.sqrt(), "{mean}");
    assert!((sd - 0.001).abs() < 0.00005, "{sd}");
    assert_eq!(add_noise(&cloud, 0.0, 9).unwrap().points(), cloud.points());
    assert!(add_noise(&cloud, -1.0, 9).is_err());
}

#[test]
fn study_script_yields_three_scans_each_followed_by_two_frames() {
    let script = fixtures::study_script(&MESH);
    let mut sim = Simulator::new(fixtures::workstation_cameras());
    for s in STUDY_SERIALS {
        sim = sim.with_object(s, MESH.clone());
    }
    let events = sim.run(&script).unwrap();
    assert!(events.windows(2).all(|w| w[0].timestamp() <= w[1].timestamp()));

    let mut current: Option<String> = None;
    let mut frames_per_blade = Vec::new();
    for e in &events {
        match e {
            SimEvent::Scan(s) => {
                current = Some(s.serial.clone());
                frames_per_blade.push(0);
            }
            SimEvent::FrameReady(f) => {
                let (serial, _) = f.ground_truth.as_ref().expect("part in view");
                assert_eq!(Some(serial), current.as_ref());
                assert_eq!(f.views.len(), 2);
                assert!(f.views.iter().all(|v| !v.cloud.is_empty() && v.detection.is_some()));
                *frames_per_blade.last_mut().unwrap() += 1;
            }
            SimEvent::Hands(_) => {}
        }
    }
    assert_eq!(frames_per_blade, [2, 2, 2]);
    let scans: Vec<&str> =
        events.iter().filter_map(|e| if let SimEvent::Scan(s) = e { Some(s.serial.as_str()) } else { None }).collect();
    assert_eq!(scans, STUDY_SERIALS);
}

#[test]
fn empty_work_area_gives_empty_views() {
    let script = parse_scenario("noise_sigma=0\ncameras=cam1,cam2\nt=0 hands 0\n").unwrap();
    let events = Simulator::new(fixtures::workstation_cameras()).run(&script).unwrap();
    let SimEvent::FrameReady(f) = &events[1] else { panic!("expected a frame") };
    assert!(f.ground_truth.is_none());
    assert!(f.views.iter().all(|v| v.cloud.is_empty() && v.detection.is_none()));
}
