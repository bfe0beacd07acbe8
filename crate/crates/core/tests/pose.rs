use std::sync::{Arc, LazyLock};

use bladeassist::fixtures;
use bladeassist::pose::{
    build_descriptor, cluster_hypotheses, compute_ppf, estimate_pose, icp_point_to_plane, match_scene, merge_views,
    CameraView, IcpParams, ModelDescriptor, PoseHypothesis, PoseParams, DEFAULT_ANGLE_STEP, DEFAULT_DIST_STEP_REL,
};
use bladeassist::sim::mesh::sphere_mesh;
use bladeassist::sim::{ScenarioScript, Simulator, TriangleMesh};
use bladeassist::{Frame, RigidTransform};
use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Blade {
    mesh: Arc<TriangleMesh>,
    desc: ModelDescriptor,
}

static BLADE: LazyLock<Blade> = LazyLock::new(|| {
    let mesh = fixtures::blade_mesh();
    let desc = build_descriptor(&fixtures::blade_model_cloud(&mesh), DEFAULT_DIST_STEP_REL, DEFAULT_ANGLE_STEP).unwrap();
    Blade { mesh: Arc::new(mesh), desc }
});

fn unit(v: Vector3<f64>) -> Vector3<f64> {
    v.normalize()
}

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn direction() -> impl Strategy<Value = Vector3<f64>> {
    vec3(1.0).prop_filter("non-zero", |v| v.norm() > 0.1).prop_map(unit)
}

fn script(cameras: &[&str], noise: f64) -> ScenarioScript {
    ScenarioScript { noise_sigma: noise, cameras: cameras.iter().map(|c| c.to_string()).collect(), seed: 5, events: vec![] }
}

proptest! {
    #[test]
    fn ppf_is_rigid_invariant(
        p1 in vec3(1.0), p2 in vec3(1.0), n1 in direction(), n2 in direction(),
        axis in direction(), angle in -3.1..3.1f64, t in vec3(5.0),
    ) {
        prop_assume!((p1 - p2).norm() > 1e-3);
        let r = UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        let a = compute_ppf(&p1, &n1, &p2, &n2).unwrap();
        let b = compute_ppf(&(r * p1 + t), &(r * n1), &(r * p2 + t), &(r * n2)).unwrap();
        for (x, y) in [(a.d, b.d), (a.a1, b.a1), (a.a2, b.a2), (a.a3, b.a3)] {
            prop_assert!((x - y).abs() < 1e-9, "{a:?} vs {b:?}");
        }
        for ang in [a.a1, a.a2, a.a3] {
            prop_assert!((0.0..=std::f64::consts::PI).contains(&ang));
        }
    }

    #[test]
    fn clustering_averages_a_tight_group(
        centre_axis in direction(), centre_angle in 0.0..3.0f64, centre_t in vec3(0.5),
        jitter in prop::collection::vec((direction(), 0.0..0.02f64, vec3(0.002), 1u32..50), 2..12),
    ) {
        let q0 = UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(centre_axis), centre_angle);
        let hyps: Vec<PoseHypothesis> = jitter
            .iter()
            .map(|(ax, ang, dt, votes)| PoseHypothesis {
                pose: RigidTransform::from_quaternion(
                    &(UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(*ax), *ang) * q0),
                    centre_t + dt,
                    Frame::Object,
                    Frame::World,
                ),
                votes: *votes,
                icp_residual: None,
            })
            .collect();
        let out = cluster_hypotheses(&hyps, 0.1, 0.01);
        prop_assert_eq!(out.len(), 1);
        prop_assert_eq!(out[0].votes, hyps.iter().map(|h| h.votes).sum::<u32>());
        // the weighted mean translation, and a rotation inside the group's spread
        let total: f64 = hyps.iter().map(|h| h.votes as f64).sum();
        let mean_t = hyps.iter().map(|h| h.pose.translation() * h.votes as f64).sum::<Vector3<f64>>() / total;
        prop_assert!((out[0].pose.translation() - mean_t).norm() < 1e-12);
        let centre = RigidTransform::from_quaternion(&q0, centre_t, Frame::Object, Frame::World);
        prop_assert!(out[0].pose.rotation_angle_to(&centre) <= 0.02 + 1e-9);
    }
}

#[test]
fn far_apart_hypotheses_stay_separate() {
    let h = |angle: f64, votes| PoseHypothesis {
        pose: RigidTransform::rot_z(angle, Frame::Object, Frame::World),
        votes,
        icp_residual: None,
    };
    let out = cluster_hypotheses(&[h(0.0, 3), h(1.0, 9), h(0.01, 4)], 0.1, 0.01);
    assert_eq!(out.iter().map(|c| c.votes).collect::<Vec<_>>(), vec![9, 7]);
}

#[test]
fn every_model_pair_finds_its_own_entry() {
    let b = &*BLADE;
    let m = b.desc.sampled_model();
    let (pts, nrm) = (m.points(), m.normals().unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for _ in 0..500 {
        use rand::Rng;
        let (i, j) = (rng.random_range(0..pts.len()), rng.random_range(0..pts.len()));
        if i == j {
            continue;
        }
        let f = compute_ppf(&pts[i], &nrm[i], &pts[j], &nrm[j]).unwrap();
        assert!(b.desc.lookup(&f).iter().any(|e| e.reference as usize == i), "pair ({i}, {j}) missing");
        checked += 1;
    }
    assert!(checked > 400);
}

#[test]
fn votes_are_bounded_by_scene_pairs() {
    let b = &*BLADE;
    let scene = b.desc.sampled_model();
    let hyps = match_scene(scene, &b.desc, 5, 30).unwrap();
    assert!(!hyps.is_empty());
    assert!(hyps.windows(2).all(|w| w[0].votes >= w[1].votes));
    // one scene pair votes once per same-reference entry in its bucket
    let per_pair = b
        .desc
        .table()
        .values()
        .map(|bucket| {
            let mut counts = std::collections::HashMap::new();
            bucket.iter().for_each(|e| *counts.entry(e.reference).or_insert(0usize) += 1);
            counts.into_values().max().unwrap_or(0)
        })
        .max()
        .unwrap();
    assert!(hyps.iter().all(|h| (h.votes as usize) <= (scene.len() - 1) * per_pair));
}

#[test]
fn unrelated_shape_gets_far_fewer_votes() {
    let b = &*BLADE;
    let self_top = match_scene(b.desc.sampled_model(), &b.desc, 5, 30).unwrap()[0].votes;
    let ball = sphere_mesh(b.desc.diameter() / 4.0, 12, 24).sample_surface(b.desc.dist_step(), 3);
    let other = match_scene(&ball, &b.desc, 5, 30).unwrap();
    let top = other.first().map_or(0, |h| h.votes);
    assert!(top * 5 < self_top, "sphere {top} vs self {self_top}");
}

#[test]
fn icp_recovers_a_small_perturbation_exactly() {
    let b = &*BLADE;
    let target = b.desc.surface_model();
    let centre = fixtures::mesh_centre(&b.mesh);
    let q = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 2f64.to_radians());
    let off = Vector3::new(0.002, 0.0, 0.0);
    // target == delta(source), so the answer is delta
    let delta = RigidTransform::from_quaternion(&q, off + centre - q * centre, Frame::Object, Frame::Object);
    let source = target.transformed(&delta.inverse()).unwrap();
    let init = RigidTransform::identity(Frame::Object, Frame::Object);
    let params = IcpParams { max_iterations: 50, convergence_tol: 1e-12, correspondence_gate: 0.02 };
    let out = icp_point_to_plane(&source, target, &init, &params).unwrap();
    assert!(out.pose.rotation_angle_to(&delta).to_degrees() < 0.01, "{}", out.pose.rotation_angle_to(&delta).to_degrees());
    assert!(out.pose.translation_distance_to(&delta) < 1e-5);
    assert!(out.residual_history.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn single_noiseless_camera_is_enough() {
    let b = &*BLADE;
    let cams = fixtures::workstation_cameras();
    let sim = Simulator::new(cams.clone()).with_object("x", b.mesh.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for i in 0..5 {
        let truth = fixtures::random_pose(&mut rng, &b.mesh);
        let views = sim.capture(&script(&["cam1"], 0.0), Some(&("x".into(), truth.clone())), i).unwrap();
        let est = estimate_pose(&views, &b.desc, &cams, &PoseParams::default()).unwrap().hypothesis;
        let (rot, trans) = (est.pose.rotation_angle_to(&truth).to_degrees(), est.pose.translation_distance_to(&truth));
        assert!(rot < 1.0 && trans < 0.001, "trial {i}: {rot} deg, {trans} m");
    }
}

#[test]
fn camera_frame_clouds_merge_like_world_clouds() {
    let b = &*BLADE;
    let cams = fixtures::workstation_cameras();
    let sim = Simulator::new(cams.clone()).with_object("x", b.mesh.clone());
    let truth = fixtures::random_pose(&mut ChaCha8Rng::seed_from_u64(22), &b.mesh);
    let world = sim.capture(&script(&["cam1", "cam2"], 0.0005), Some(&("x".into(), truth)), 0).unwrap();
    let local: Vec<CameraView> = world
        .iter()
        .map(|v| {
            let cam = cams.iter().find(|c| c.id == v.camera_id).unwrap();
            CameraView { cloud: v.cloud.transformed(&cam.world_to_camera).unwrap(), ..v.clone() }
        })
        .collect();
    assert!(local.iter().all(|v| v.cloud.frame().is_camera()));
    let (a, oa) = merge_views(&world, &cams).unwrap();
    let (b2, ob) = merge_views(&local, &cams).unwrap();
    assert_eq!(a.len(), b2.len());
    assert_eq!(oa, ob);
    assert!(a.points().iter().zip(b2.points()).all(|(p, q)| (p - q).norm() < 1e-12));
}

#[test]
fn pose_follows_a_rigid_move_of_the_part() {
    let b = &*BLADE;
    let cams = fixtures::workstation_cameras();
    let sim = Simulator::new(cams.clone()).with_object("x", b.mesh.clone());
    let truth = fixtures::random_pose(&mut ChaCha8Rng::seed_from_u64(23), &b.mesh);
    let g = RigidTransform::from_axis_angle(&Vector3::z(), 0.4, Vector3::new(0.01, -0.01, 0.0), Frame::World, Frame::World);
    let moved = g.compose(&truth).unwrap();
    let s = script(&["cam1", "cam2"], 0.0005);
    let est = |pose: &RigidTransform| {
        let views = sim.capture(&s, Some(&("x".into(), pose.clone())), 0).unwrap();
        estimate_pose(&views, &b.desc, &cams, &PoseParams::default()).unwrap().hypothesis.pose
    };
    let (e0, e1) = (est(&truth), est(&moved));
    let predicted = g.compose(&e0).unwrap();
    // each estimate is within 5 deg / 5 mm of truth, so the two may disagree by twice that
    assert!(e1.rotation_angle_to(&predicted).to_degrees() < 10.0);
    assert!(e1.translation_distance_to(&predicted) < 0.01);
    assert!(e1.rotation_angle_to(&moved).to_degrees() < 5.0 && e1.translation_distance_to(&moved) < 0.005);
}
