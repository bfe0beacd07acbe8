use std::sync::{Arc, LazyLock};

use bladeassist::fixtures::{self, STUDY_SERIALS};
use bladeassist::geometry::{ar_project, Point3};
use bladeassist::pose::CameraView;
use bladeassist::session::{
    DetailKind, ModelRegistry, Notification, OverlayLayer, Phase, Session, SessionConfig, SessionError,
};
use bladeassist::sim::{ScenarioScript, Simulator, TriangleMesh};
use bladeassist::twin::{DefectStatus, DocumentationRecord, Outcome, TwinStore};
use bladeassist::{Frame, RigidTransform};
use proptest::prelude::*;

static MESH: LazyLock<Arc<TriangleMesh>> = LazyLock::new(|| Arc::new(fixtures::blade_mesh()));
static REGISTRY: LazyLock<Arc<ModelRegistry>> = LazyLock::new(|| Arc::new(fixtures::blade_registry()));

fn session() -> (tempfile::TempDir, Arc<TwinStore>, Session) {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(TwinStore::open(dir.path()).unwrap());
    for a in fixtures::study_assets() {
        store.create_asset(a).unwrap();
    }
    let cfg = SessionConfig::new(fixtures::workstation_cameras(), fixtures::AR_CAMERA_ID);
    let s = Session::new(store.clone(), REGISTRY.clone(), cfg);
    (dir, store, s)
}

fn views(serial: &str, pose: &RigidTransform) -> Vec<CameraView> {
    let sim = Simulator::new(fixtures::workstation_cameras()).with_object(serial, MESH.clone());
    let script = ScenarioScript { noise_sigma: 0.0, cameras: vec!["cam1".into(), "cam2".into()], seed: 3, events: vec![] };
    sim.capture(&script, Some(&(serial.to_string(), pose.clone())), 0).unwrap()
}

fn empty_views() -> Vec<CameraView> {
    let sim = Simulator::new(fixtures::workstation_cameras());
    let script = ScenarioScript { noise_sigma: 0.0, cameras: vec!["cam1".into(), "cam2".into()], seed: 3, events: vec![] };
    sim.capture(&script, None, 0).unwrap()
}

fn record(defect: &str, outcome: Outcome, t: f64) -> DocumentationRecord {
    DocumentationRecord {
        defect_id: defect.into(),
        worker_id: "w1".into(),
        started_at_s: t - 5.0,
        finished_at_s: t,
        duration_s: 5.0,
        notes: String::new(),
        outcome,
    }
}

/// Session with blade 0 scanned, its defect selected and a pose estimated.
fn with_overlay() -> (tempfile::TempDir, Arc<TwinStore>, Session, RigidTransform) {
    let (dir, store, mut s) = session();
    let serial = STUDY_SERIALS[0];
    s.on_scan(serial, 0.0).unwrap();
    s.select_defect("D-01", 2.0).unwrap();
    let pose = fixtures::placement(&MESH, 0.4, 0.01, 0.02);
    let frame = s.on_hands_cleared(&views(serial, &pose), 5.0).expect("overlay");
    assert!(!frame.stale);
    (dir, store, s, pose)
}

#[test]
fn scan_rules() {
    let (_d, _store, mut s) = session();
    assert!(matches!(s.on_scan("nope", 0.0), Err(SessionError::UnknownSerial(_))));
    assert_eq!(s.phase(), Phase::Idle);
    assert_eq!(s.on_scan(STUDY_SERIALS[0], 1.0).unwrap(), Phase::ObjectIdentified);
    assert!(matches!(s.on_scan(STUDY_SERIALS[1], 2.0), Err(SessionError::Busy)));
    assert_eq!(s.serial(), Some(STUDY_SERIALS[0]));
    assert!(s.view().last_error.is_some());
}

#[test]
fn hands_cleared_while_idle_is_ignored() {
    let (_d, _store, mut s) = session();
    let pose = fixtures::placement(&MESH, 0.0, 0.0, 0.0);
    assert!(s.on_hands_cleared(&views(STUDY_SERIALS[0], &pose), 1.0).is_none());
    assert_eq!(s.pose_estimations(), 0);
    assert!(s.take_notifications().is_empty());
}

#[test]
fn overlay_matches_ar_projection_of_twin_geometry() {
    let (_d, store, s, truth) = with_overlay();
    let frame = s.overlay().unwrap().clone();
    let est = RigidTransform::from_row_major(&frame.pose, Frame::Object, Frame::World).unwrap();
    assert!(est.rotation_angle_to(&truth).to_degrees() < 1.0);
    assert!(est.translation_distance_to(&truth) < 0.002);

    let cam = fixtures::workstation_cameras().into_iter().find(|c| c.id == fixtures::AR_CAMERA_ID).unwrap();
    let asset = store.asset(STUDY_SERIALS[0]).unwrap();
    let defect = asset.defect("D-01").unwrap();
    let expected: Vec<[f64; 2]> = defect
        .geometry_m
        .iter()
        .map(|p| {
            let px = ar_project(&cam.intrinsics, &cam.world_to_camera, &est, &Point3::new(p[0], p[1], p[2], Frame::Object))
                .unwrap();
            [px.u, px.v]
        })
        .collect();
    assert_eq!(frame.defects.len(), 1);
    let line = &frame.defects[0];
    assert!(line.highlighted);
    assert_eq!(line.points.len(), expected.len());
    for (a, b) in line.points.iter().zip(&expected) {
        assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9, "{a:?} vs {b:?}");
    }
    assert!(!frame.zones.is_empty());
    assert!(frame.zones.iter().all(|z| z.source == defect.zone_id));
    let k = &cam.intrinsics;
    for z in &frame.zones {
        for p in &z.points {
            assert!(p[0] >= 0.0 && p[0] <= k.width as f64 && p[1] >= 0.0 && p[1] <= k.height as f64);
        }
    }
    assert_eq!(frame.wall_thickness.len(), s.view().detail.unwrap().nearby_measurements.len());
    assert!(frame.wall_thickness.iter().all(|w| w.label.ends_with(" mm")));
}

#[test]
fn layer_toggle_reuses_cached_pose() {
    let (_d, _store, mut s, _) = with_overlay();
    let runs = s.pose_estimations();
    let full = s.overlay().unwrap().clone();
    let off = s.toggle_layer(OverlayLayer::Zones, false).unwrap().unwrap();
    assert!(off.zones.is_empty());
    assert_eq!(off.defects, full.defects);
    assert_eq!(off.wall_thickness, full.wall_thickness);
    let off_again = s.toggle_layer(OverlayLayer::Zones, false).unwrap().unwrap();
    assert_eq!(off, off_again);
    let on = s.toggle_layer(OverlayLayer::Zones, true).unwrap().unwrap();
    assert_eq!(on, full);
    let no_defects = s.toggle_layer(OverlayLayer::Defects, false).unwrap().unwrap();
    assert!(no_defects.defects.is_empty());
    assert_eq!(s.pose_estimations(), runs);
    assert!(s.take_notifications().iter().any(|n| matches!(n, Notification::Overlay(_))));
}

#[test]
fn failed_estimation_keeps_pose_and_marks_stale() {
    let (_d, _store, mut s, _) = with_overlay();
    let before = s.overlay().unwrap().clone();
    let after = s.on_hands_cleared(&empty_views(), 9.0).unwrap();
    assert!(after.stale);
    assert_eq!(after.pose, before.pose);
    assert_eq!(after.defects, before.defects);
    let (_, stale) = s.current_pose().unwrap();
    assert!(stale);
    assert!(s.view().last_error.unwrap().contains("no object"));
}

#[test]
fn documentation_closes_defect_and_returns_to_idle() {
    let (_d, store, mut s, _) = with_overlay();
    s.on_hands_entered(10.0);
    assert!(s.view().repair_started);
    assert_eq!(s.finish_repair(30.0).unwrap(), Phase::Documenting);
    assert!(matches!(s.document_repair(record("D-99", Outcome::Repaired, 31.0), 31.0), Err(SessionError::NotFound(_))));
    assert_eq!(s.phase(), Phase::Documenting);
    assert_eq!(s.document_repair(record("D-01", Outcome::Repaired, 35.0), 35.0).unwrap(), Phase::Idle);
    let a = store.asset(STUDY_SERIALS[0]).unwrap();
    assert_eq!(a.defect("D-01").unwrap().status, DefectStatus::Repaired);
    assert_eq!(a.submodels.documentation.len(), 1);
    let actions: Vec<u8> = s.session_log().iter().map(|r| r.action).collect();
    assert_eq!(actions, vec![1, 2, 5, 6]);
    let log = s.session_log();
    assert_eq!((log[0].start_s, log[0].end_s), (0.0, 2.0));
    assert_eq!((log[1].start_s, log[1].end_s), (2.0, 10.0));
    assert_eq!((log[2].start_s, log[2].end_s), (10.0, 30.0));
    assert_eq!((log[3].start_s, log[3].end_s), (30.0, 35.0));
}

#[test]
fn deferred_documentation_keeps_defect_open() {
    let (_d, store, mut s) = session();
    s.on_scan(STUDY_SERIALS[1], 0.0).unwrap();
    s.select_defect("D-01", 1.0).unwrap();
    s.finish_repair(4.0).unwrap();
    assert_eq!(s.document_repair(record("D-01", Outcome::Deferred, 6.0), 6.0).unwrap(), Phase::ObjectIdentified);
    assert_eq!(store.list_open_defects(STUDY_SERIALS[1]).unwrap().len(), 1);
}

#[test]
fn detail_views_logged_only_before_repair() {
    let (_d, _store, mut s) = session();
    s.on_scan(STUDY_SERIALS[0], 0.0).unwrap();
    s.select_defect("D-01", 1.0).unwrap();
    assert!(!s.detail_viewed(DetailKind::Zone, 2.0, 2.5).unwrap());
    assert!(s.detail_viewed(DetailKind::Zone, 2.0, 4.0).unwrap());
    assert!(s.detail_viewed(DetailKind::WallThickness, 4.0, 6.0).unwrap());
    s.begin_repair(7.0).unwrap();
    assert!(!s.detail_viewed(DetailKind::Zone, 7.0, 9.0).unwrap());
    let actions: Vec<(u8, f64, f64)> = s.session_log().iter().map(|r| (r.action, r.start_s, r.end_s)).collect();
    assert_eq!(actions, vec![(1, 0.0, 1.0), (2, 1.0, 2.0), (3, 2.0, 4.0), (4, 4.0, 6.0)]);
}

#[test]
fn abort_drops_partial_blade_log() {
    let (_d, _store, mut s) = session();
    s.on_scan(STUDY_SERIALS[0], 0.0).unwrap();
    s.select_defect("D-01", 1.0).unwrap();
    assert_eq!(s.abort(2.0), Phase::Idle);
    assert!(s.session_log().is_empty());
    assert!(s.toggle_layer(OverlayLayer::Zones, false).is_err());
}

#[derive(Debug, Clone)]
enum Op {
    Scan(usize),
    Select(bool),
    View(bool, f64),
    HandsIn,
    Finish,
    Document(bool, bool),
    Abort,
    Toggle(u8, bool),
    Cleared,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0usize..4).prop_map(Op::Scan),
        any::<bool>().prop_map(Op::Select),
        (any::<bool>(), 0.0..3.0f64).prop_map(|(k, d)| Op::View(k, d)),
        Just(Op::HandsIn),
        Just(Op::Finish),
        (any::<bool>(), any::<bool>()).prop_map(|(ok, rep)| Op::Document(ok, rep)),
        Just(Op::Abort),
        (0u8..3, any::<bool>()).prop_map(|(l, e)| Op::Toggle(l, e)),
        Just(Op::Cleared),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Reference state machine: the session accepts exactly the transitions
    // the model accepts, and its log stays well formed.
    #[test]
    fn session_follows_reference_machine(ops in prop::collection::vec((op(), 0.1..5.0f64), 1..40)) {
        let (_d, store, mut s) = session();
        let mut t = 0.0;
        for (op, dt) in ops {
            t += dt;
            let before = s.phase();
            let open = s.serial().map(|x| store.list_open_defects(x).unwrap().len()).unwrap_or(0);
            match op {
                Op::Scan(i) => {
                    let r = s.on_scan(STUDY_SERIALS.get(i).copied().unwrap_or("TB-unknown"), t);
                    prop_assert_eq!(r.is_ok(), before == Phase::Idle && i < 3);
                }
                Op::Select(valid) => {
                    let r = s.select_defect(if valid { "D-01" } else { "D-77" }, t);
                    prop_assert_eq!(r.is_ok(), before == Phase::ObjectIdentified && valid && open > 0);
                }
                Op::View(zone, d) => {
                    let kind = if zone { DetailKind::Zone } else { DetailKind::WallThickness };
                    let r = s.detail_viewed(kind, t, t + d);
                    prop_assert_eq!(r.is_ok(), before == Phase::DefectSelected);
                    t += d;
                }
                Op::HandsIn => s.on_hands_entered(t),
                Op::Finish => {
                    prop_assert_eq!(s.finish_repair(t).is_ok(), before == Phase::DefectSelected);
                }
                Op::Document(valid, repaired) => {
                    let outcome = if repaired { Outcome::Repaired } else { Outcome::Deferred };
                    let r = s.document_repair(record(if valid { "D-01" } else { "D-77" }, outcome, t), t);
                    prop_assert_eq!(r.is_ok(), before == Phase::Documenting && valid);
                    if r.is_ok() {
                        let expect = if repaired { Phase::Idle } else { Phase::ObjectIdentified };
                        prop_assert_eq!(s.phase(), expect);
                    } else {
                        prop_assert_eq!(s.phase(), before);
                    }
                }
                Op::Abort => {
                    prop_assert_eq!(s.abort(t), Phase::Idle);
                }
                Op::Toggle(l, e) => {
                    let r = s.toggle_layer(OverlayLayer::ALL[l as usize], e);
                    prop_assert_eq!(r.is_ok(), before != Phase::Idle);
                }
                Op::Cleared => {
                    let r = s.on_hands_cleared(&empty_views(), t);
                    prop_assert!(r.is_none());
                    prop_assert_eq!(s.phase(), before);
                }
            }
            prop_assert_eq!(s.phase() == Phase::Idle, s.serial().is_none());
            prop_assert_eq!(s.phase() == Phase::DefectSelected || s.phase() == Phase::Documenting, s.defect_id().is_some());
        }
        let mut by_blade: std::collections::HashMap<&str, f64> = Default::default();
        for r in s.session_log() {
            prop_assert!(r.start_s <= r.end_s);
            let last = by_blade.entry(r.blade.as_str()).or_insert(f64::NEG_INFINITY);
            prop_assert!(r.start_s >= *last - 1e-12, "overlap in {:?}", s.session_log());
            *last = r.end_s;
        }
        for serial in STUDY_SERIALS {
            store.asset(serial).unwrap().validate().unwrap();
        }
    }
}

fn front_camera() -> bladeassist::CameraConfig {
    let k = bladeassist::CameraIntrinsics::new(1000.0, 1000.0, 640.0, 360.0, 1280, 720).unwrap();
    bladeassist::CameraConfig::new("c", k, RigidTransform::identity(Frame::World, Frame::camera("c"))).unwrap()
}

fn asset_with_line(line: Vec<[f64; 3]>) -> bladeassist::twin::AssetTwin {
    let mut a = fixtures::study_assets().remove(0);
    a.submodels.defects[0].geometry_m = line;
    a
}

fn overlay_of(asset: &bladeassist::twin::AssetTwin, layers: &[OverlayLayer], radius: f64) -> bladeassist::session::AROverlayFrame {
    let pose = RigidTransform::identity(Frame::Object, Frame::World);
    let layers = layers.iter().copied().collect();
    bladeassist::session::compute_overlays(&pose, 1.0, &front_camera(), asset, &layers, Some("D-01"), radius, false).unwrap()
}

#[test]
fn straight_ahead_segment_projects_by_hand() {
    let asset = asset_with_line(vec![[-0.01, 0.0, 1.0], [0.02, 0.01, 2.0]]);
    let f = overlay_of(&asset, &[OverlayLayer::Defects], 30.0);
    assert_eq!(f.defects.len(), 1);
    // u = fx·x/z + cx, v = fy·y/z + cy
    assert_eq!(f.defects[0].points, vec![[630.0, 360.0], [650.0, 365.0]]);
    assert!(f.defects[0].highlighted);
}

#[test]
fn lines_are_clipped_to_the_image_and_split_behind_the_camera() {
    // second point projects to u = 2640, beyond the right edge
    let asset = asset_with_line(vec![[0.0, 0.0, 1.0], [2.0, 0.0, 1.0]]);
    let f = overlay_of(&asset, &[OverlayLayer::Defects], 30.0);
    let p = &f.defects[0].points;
    assert_eq!(p[0], [640.0, 360.0]);
    assert!((p[1][0] - 1280.0).abs() < 1e-9 && (p[1][1] - 360.0).abs() < 1e-9);

    let asset = asset_with_line(vec![[0.0, 0.0, 1.0], [0.01, 0.0, 1.0], [0.0, 0.0, -1.0], [0.0, 0.01, 1.0], [0.0, 0.02, 1.0]]);
    let f = overlay_of(&asset, &[OverlayLayer::Defects], 30.0);
    assert_eq!(f.defects.len(), 2);
    assert_eq!(f.defects[0].points, vec![[640.0, 360.0], [650.0, 360.0]]);
    assert_eq!(f.defects[1].points, vec![[640.0, 370.0], [640.0, 380.0]]);
}

#[test]
fn no_layers_no_primitives() {
    let asset = asset_with_line(vec![[0.0, 0.0, 1.0], [0.01, 0.0, 1.0]]);
    let f = overlay_of(&asset, &[], 1e9);
    assert!(f.defects.is_empty() && f.zones.is_empty() && f.wall_thickness.is_empty());
    assert_eq!(f.pose, RigidTransform::identity(Frame::Object, Frame::World).to_row_major());
}

#[test]
fn zero_radius_keeps_only_coincident_spots() {
    let mut asset = asset_with_line(vec![[0.0, 0.0, 1.0], [0.02, 0.0, 1.0]]);
    let d = asset.defect("D-01").unwrap().clone();
    assert!(bladeassist::session::nearby_measurements(&asset, &d, 0.0).is_empty());
    asset.submodels.wall_thickness[0].location_m = d.centroid();
    let near = bladeassist::session::nearby_measurements(&asset, &d, 0.0);
    assert_eq!(near.len(), 1);
    let f = overlay_of(&asset, &[OverlayLayer::WallThickness], 0.0);
    assert_eq!(f.wall_thickness.len(), 1);
    assert_eq!(f.wall_thickness[0].position, [650.0, 360.0]);
    assert_eq!(f.wall_thickness[0].label, format!("{:.2} mm", near[0].thickness_mm));
}
