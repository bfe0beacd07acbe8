//! Repair session workflow: scan → select defect → repair → document, with
//! pose-driven AR overlays and a per-blade action log.
//!
//! [`Session`] owns all mutable state and is driven by plain method calls
//! carrying the current time in seconds; the HTTP service and the headless
//! operator both feed it from a single loop.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::ActionRecord;
use crate::geometry::project_coords;
use crate::pose::{
    build_descriptor, estimate_pose, CameraView, ModelDescriptor, PoseError, PoseParams, DEFAULT_ANGLE_STEP,
    DEFAULT_DIST_STEP_REL,
};
use crate::sim::{FrameReady, SimEvent, TriangleMesh};
use crate::twin::{AssetTwin, Defect, DocumentationRecord, Outcome, TwinError, TwinStore, WallThicknessMeasurement, Zone};
use crate::{CameraConfig, RigidTransform};

pub const ACTION_LABELS: [&str; 6] =
    ["identify", "read_defect", "check_zone", "check_wall_thickness", "repair", "document"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Idle,
    ObjectIdentified,
    DefectSelected,
    Documenting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlayLayer {
    Defects,
    Zones,
    WallThickness,
}

impl OverlayLayer {
    pub const ALL: [OverlayLayer; 3] = [OverlayLayer::Defects, OverlayLayer::Zones, OverlayLayer::WallThickness];
}

/// Supplementary information the operator can open during the reading phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetailKind {
    Zone,
    WallThickness,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("a blade is already in progress")]
    Busy,
    #[error("unknown serial {0:?}")]
    UnknownSerial(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("{op} not allowed in state {from:?}")]
    IllegalTransition { from: Phase, op: &'static str },
    #[error("no model registered for model id {0:?}")]
    UnknownModel(String),
    #[error(transparent)]
    Twin(#[from] TwinError),
}

/// Mesh and descriptor of one blade product family.
#[derive(Debug, Clone)]
pub struct ModelAsset {
    pub mesh: Arc<TriangleMesh>,
    pub descriptor: Arc<ModelDescriptor>,
}

impl ModelAsset {
    /// Samples the mesh surface every `spacing` meters and builds a
    /// descriptor with the default steps.
    pub fn from_mesh(mesh: TriangleMesh, spacing: f64) -> Result<Self, PoseError> {
        let cloud = mesh.sample_surface(spacing, 1);
        let descriptor = build_descriptor(&cloud, DEFAULT_DIST_STEP_REL, DEFAULT_ANGLE_STEP)?;
        Ok(ModelAsset { mesh: Arc::new(mesh), descriptor: Arc::new(descriptor) })
    }
}

pub type ModelRegistry = HashMap<String, ModelAsset>;

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub cameras: Vec<CameraConfig>,
    pub ar_camera: String,
    pub pose_params: PoseParams,
    pub nearby_radius_mm: f64,
}

impl SessionConfig {
    pub fn new(cameras: Vec<CameraConfig>, ar_camera: impl Into<String>) -> Self {
        SessionConfig { cameras, ar_camera: ar_camera.into(), pose_params: PoseParams::default(), nearby_radius_mm: 30.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    /// Id of the defect or zone the primitive was projected from.
    pub source: String,
    pub points: Vec<[f64; 2]>,
    pub highlighted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub source: String,
    pub position: [f64; 2],
    pub label: String,
}

/// Pixel primitives for one camera image, computed from one pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AROverlayFrame {
    pub camera_id: String,
    pub pose_timestamp: f64,
    /// OBJECT→WORLD pose the primitives were projected with, row-major `[R | t]`.
    pub pose: [f64; 12],
    pub defects: Vec<Polyline>,
    pub zones: Vec<Polyline>,
    pub wall_thickness: Vec<LabeledPoint>,
    pub stale: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseInfo {
    pub pose: [f64; 12],
    pub timestamp: f64,
    pub stale: bool,
    pub votes: u32,
    pub residual_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectDetail {
    pub defect: Defect,
    pub zone: Option<Zone>,
    pub nearby_measurements: Vec<WallThicknessMeasurement>,
}

/// Snapshot served to the operator UI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub state: Phase,
    pub serial: Option<String>,
    pub defect_id: Option<String>,
    pub pose: Option<PoseInfo>,
    pub layers: Vec<OverlayLayer>,
    pub open_defects: Vec<Defect>,
    pub detail: Option<DefectDetail>,
    pub repair_started: bool,
    pub last_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", content = "data", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Notification {
    State(SessionView),
    Overlay(AROverlayFrame),
    Error { message: String },
}

/// Clips segment `a→b` to the rectangle `[0, w] × [0, h]` (Liang–Barsky).
fn clip_segment(a: [f64; 2], b: [f64; 2], w: f64, h: f64) -> Option<([f64; 2], [f64; 2])> {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [(-dx, a[0]), (dx, w - a[0]), (-dy, a[1]), (dy, h - a[1])] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    if t0 > t1 {
        return None;
    }
    let at = |t: f64| if t == 0.0 { a } else if t == 1.0 { b } else { [a[0] + t * dx, a[1] + t * dy] };
    Some((at(t0), at(t1)))
}

/// Projects an OBJECT-frame polyline and clips it to the image. Vertices
/// behind the camera break the line; each visible run becomes its own
/// polyline.
fn project_polyline(
    pts: &[[f64; 3]],
    obj_to_cam: &RigidTransform,
    cam: &CameraConfig,
    source: &str,
    highlighted: bool,
) -> Vec<Polyline> {
    let k = &cam.intrinsics;
    let (w, h) = (k.width as f64, k.height as f64);
    let px: Vec<Option<[f64; 2]>> = pts
        .iter()
        .map(|p| {
            let c = obj_to_cam.apply(&Vector3::from(*p));
            project_coords(k, &c).ok().map(|q| [q.u, q.v])
        })
        .collect();
    let mut out: Vec<Polyline> = Vec::new();
    let mut current: Vec<[f64; 2]> = Vec::new();
    let mut flush = |cur: &mut Vec<[f64; 2]>| {
        if cur.len() >= 2 {
            out.push(Polyline { source: source.to_string(), points: std::mem::take(cur), highlighted });
        }
        cur.clear();
    };
    for seg in px.windows(2) {
        let (Some(a), Some(b)) = (seg[0], seg[1]) else {
            flush(&mut current);
            continue;
        };
        match clip_segment(a, b, w, h) {
            Some((ca, cb)) => {
                if current.last() != Some(&ca) {
                    flush(&mut current);
                    current.push(ca);
                }
                current.push(cb);
            }
            None => flush(&mut current),
        }
    }
    flush(&mut current);
    out
}

fn distance_mm(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (Vector3::from(*a) - Vector3::from(*b)).norm() * 1000.0
}

/// Measurements within `radius_mm` of the defect polyline's centroid.
pub fn nearby_measurements(asset: &AssetTwin, defect: &Defect, radius_mm: f64) -> Vec<WallThicknessMeasurement> {
    let c = defect.centroid();
    asset
        .submodels
        .wall_thickness
        .iter()
        .filter(|m| distance_mm(&m.location_m, &c) <= radius_mm)
        .cloned()
        .collect()
}

/// Projects the enabled layers of `asset` into `camera` under the
/// OBJECT→WORLD `pose`.
///
/// - Defects: every open defect, the selected one highlighted.
/// - Zones: boundary of the selected defect's zone.
/// - WallThickness: measurements near the selected defect, labelled with
///   their thickness.
#[allow(clippy::too_many_arguments)]
pub fn compute_overlays(
    pose: &RigidTransform,
    pose_timestamp: f64,
    camera: &CameraConfig,
    asset: &AssetTwin,
    layers: &BTreeSet<OverlayLayer>,
    selected: Option<&str>,
    nearby_radius_mm: f64,
    stale: bool,
) -> Result<AROverlayFrame, crate::GeometryError> {
    let obj_to_cam = camera.world_to_camera.compose(pose)?;
    let selected = selected.and_then(|id| asset.defect(id));
    let mut frame = AROverlayFrame {
        camera_id: camera.id.clone(),
        pose_timestamp,
        pose: pose.to_row_major(),
        defects: Vec::new(),
        zones: Vec::new(),
        wall_thickness: Vec::new(),
        stale,
    };
    if layers.contains(&OverlayLayer::Defects) {
        for d in asset.open_defects() {
            let hl = selected.is_some_and(|s| s.id == d.id);
            frame.defects.extend(project_polyline(&d.geometry_m, &obj_to_cam, camera, &d.id, hl));
        }
    }
    let Some(sel) = selected else { return Ok(frame) };
    if layers.contains(&OverlayLayer::Zones) {
        if let Some(z) = asset.zone(&sel.zone_id) {
            frame.zones.extend(project_polyline(&z.boundary_m, &obj_to_cam, camera, &z.id, false));
        }
    }
    if layers.contains(&OverlayLayer::WallThickness) {
        let k = &camera.intrinsics;
        for m in nearby_measurements(asset, sel, nearby_radius_mm) {
            let c = obj_to_cam.apply(&Vector3::from(m.location_m));
            let Ok(px) = project_coords(k, &c) else { continue };
            if k.contains(&px) {
                frame.wall_thickness.push(LabeledPoint {
                    source: m.spot_id.clone(),
                    position: [px.u, px.v],
                    label: format!("{:.2} mm", m.thickness_mm),
                });
            }
        }
    }
    Ok(frame)
}

/// Timing of the defect currently being worked on.
#[derive(Debug, Clone)]
struct Work {
    defect_id: String,
    selected_at: f64,
    reading_logged: bool,
    cursor: f64,
    repair_start: Option<f64>,
    finished_at: Option<f64>,
}

#[derive(Debug, Clone)]
struct CurrentPose {
    pose: RigidTransform,
    timestamp: f64,
    stale: bool,
    votes: u32,
    residual: Option<f64>,
}

#[derive(Debug)]
pub struct Session {
    store: Arc<TwinStore>,
    models: Arc<ModelRegistry>,
    config: SessionConfig,
    phase: Phase,
    serial: Option<String>,
    scanned_at: f64,
    identify_logged: bool,
    work: Option<Work>,
    pose: Option<CurrentPose>,
    layers: BTreeSet<OverlayLayer>,
    overlay: Option<AROverlayFrame>,
    log: Vec<ActionRecord>,
    blade_log_start: usize,
    last_error: Option<String>,
    clock: f64,
    pose_runs: usize,
    outbox: Vec<Notification>,
}

impl Session {
    pub fn new(store: Arc<TwinStore>, models: Arc<ModelRegistry>, config: SessionConfig) -> Self {
        Session {
            store,
            models,
            config,
            phase: Phase::Idle,
            serial: None,
            scanned_at: 0.0,
            identify_logged: false,
            work: None,
            pose: None,
            layers: OverlayLayer::ALL.into_iter().collect(),
            overlay: None,
            log: Vec::new(),
            blade_log_start: 0,
            last_error: None,
            clock: f64::NEG_INFINITY,
            pose_runs: 0,
            outbox: Vec::new(),
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn serial(&self) -> Option<&str> {
        self.serial.as_deref()
    }

    pub fn defect_id(&self) -> Option<&str> {
        self.work.as_ref().map(|w| w.defect_id.as_str())
    }

    pub fn layers(&self) -> &BTreeSet<OverlayLayer> {
        &self.layers
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn store(&self) -> &Arc<TwinStore> {
        &self.store
    }

    pub fn models(&self) -> &Arc<ModelRegistry> {
        &self.models
    }

    /// Latest overlay frame, if a pose has been estimated for this blade.
    pub fn overlay(&self) -> Option<&AROverlayFrame> {
        self.overlay.as_ref()
    }

    /// Number of pose estimations run so far.
    pub fn pose_estimations(&self) -> usize {
        self.pose_runs
    }

    pub fn current_pose(&self) -> Option<(&RigidTransform, bool)> {
        self.pose.as_ref().map(|p| (&p.pose, p.stale))
    }

    /// Drains pending notifications for push clients.
    pub fn take_notifications(&mut self) -> Vec<Notification> {
        std::mem::take(&mut self.outbox)
    }

    /// Time never runs backwards inside the session.
    fn tick(&mut self, now: f64) -> f64 {
        if now.is_finite() && now > self.clock {
            self.clock = now;
        }
        self.clock
    }

    fn record(&mut self, action: u8, start: f64, end: f64) {
        let blade = self.serial.clone().expect("logging requires an active blade");
        self.log.push(ActionRecord {
            blade,
            action,
            label: ACTION_LABELS[action as usize - 1].to_string(),
            start_s: start,
            end_s: end.max(start),
        });
    }

    fn asset(&self) -> Result<AssetTwin, SessionError> {
        let serial = self.serial.as_deref().ok_or(SessionError::IllegalTransition { from: self.phase, op: "asset" })?;
        Ok(self.store.asset(serial)?)
    }

    fn fail(&mut self, e: SessionError) -> SessionError {
        self.last_error = Some(e.to_string());
        self.outbox.push(Notification::Error { message: e.to_string() });
        e
    }

    fn publish_state(&mut self) {
        let v = self.view();
        self.outbox.push(Notification::State(v));
    }

    pub fn view(&self) -> SessionView {
        let asset = self.serial.as_deref().and_then(|s| self.store.asset(s).ok());
        let detail = match (&asset, self.defect_id()) {
            (Some(a), Some(id)) => a.defect(id).map(|d| DefectDetail {
                defect: d.clone(),
                zone: a.zone(&d.zone_id).cloned(),
                nearby_measurements: nearby_measurements(a, d, self.config.nearby_radius_mm),
            }),
            _ => None,
        };
        SessionView {
            state: self.phase,
            serial: self.serial.clone(),
            defect_id: self.defect_id().map(str::to_string),
            pose: self.pose.as_ref().map(|p| PoseInfo {
                pose: p.pose.to_row_major(),
                timestamp: p.timestamp,
                stale: p.stale,
                votes: p.votes,
                residual_m: p.residual,
            }),
            layers: self.layers.iter().copied().collect(),
            open_defects: asset.map(|a| a.open_defects()).unwrap_or_default(),
            detail,
            repair_started: self.work.as_ref().is_some_and(|w| w.repair_start.is_some()),
            last_error: self.last_error.clone(),
        }
    }

    /// A serial number was scanned. Only accepted while idle.
    pub fn on_scan(&mut self, serial: &str, now: f64) -> Result<Phase, SessionError> {
        let now = self.tick(now);
        if self.phase != Phase::Idle {
            return Err(self.fail(SessionError::Busy));
        }
        let asset = match self.store.asset(serial) {
            Ok(a) => a,
            Err(TwinError::NotFound(_)) => return Err(self.fail(SessionError::UnknownSerial(serial.to_string()))),
            Err(e) => return Err(self.fail(e.into())),
        };
        if !self.models.contains_key(&asset.model_id) {
            return Err(self.fail(SessionError::UnknownModel(asset.model_id)));
        }
        self.phase = Phase::ObjectIdentified;
        self.serial = Some(serial.to_string());
        self.scanned_at = now;
        self.identify_logged = false;
        self.blade_log_start = self.log.len();
        self.pose = None;
        self.overlay = None;
        self.last_error = None;
        self.publish_state();
        Ok(self.phase)
    }

    /// Selects an open defect; all overlay layers are switched on.
    pub fn select_defect(&mut self, defect_id: &str, now: f64) -> Result<DefectDetail, SessionError> {
        let now = self.tick(now);
        if self.phase != Phase::ObjectIdentified {
            return Err(self.fail(SessionError::IllegalTransition { from: self.phase, op: "select_defect" }));
        }
        let asset = self.asset()?;
        let Some(d) = asset.open_defects().into_iter().find(|d| d.id == defect_id) else {
            return Err(self.fail(SessionError::NotFound(format!("open defect {defect_id:?}"))));
        };
        if !self.identify_logged {
            self.record(1, self.scanned_at, now);
            self.identify_logged = true;
        }
        self.work = Some(Work {
            defect_id: d.id.clone(),
            selected_at: now,
            reading_logged: false,
            cursor: now,
            repair_start: None,
            finished_at: None,
        });
        self.phase = Phase::DefectSelected;
        self.layers = OverlayLayer::ALL.into_iter().collect();
        self.refresh_overlay(false);
        self.publish_state();
        Ok(DefectDetail {
            zone: asset.zone(&d.zone_id).cloned(),
            nearby_measurements: nearby_measurements(&asset, &d, self.config.nearby_radius_mm),
            defect: d,
        })
    }

    fn end_reading(&mut self, at: f64) {
        let w = self.work.as_mut().expect("defect selected");
        if !w.reading_logged {
            w.reading_logged = true;
            w.cursor = at;
            let start = w.selected_at;
            self.record(2, start, at);
        }
    }

    /// Zone or wall-thickness detail was on screen during `[start, end]`.
    /// Logged as action 3 or 4 when shown for at least one second before the
    /// repair started. Returns whether an interval was logged.
    pub fn detail_viewed(&mut self, kind: DetailKind, start: f64, end: f64) -> Result<bool, SessionError> {
        let now = self.tick(end);
        if self.phase != Phase::DefectSelected {
            return Err(self.fail(SessionError::IllegalTransition { from: self.phase, op: "detail_viewed" }));
        }
        let w = self.work.as_ref().expect("defect selected");
        if w.repair_start.is_some() {
            return Ok(false);
        }
        let start = start.max(w.cursor);
        let end = end.min(now);
        if !(end - start >= 1.0) {
            return Ok(false);
        }
        self.end_reading(start);
        let action = match kind {
            DetailKind::Zone => 3,
            DetailKind::WallThickness => 4,
        };
        self.record(action, start, end);
        self.work.as_mut().expect("defect selected").cursor = end;
        Ok(true)
    }

    /// The operator starts working on the selected defect.
    pub fn begin_repair(&mut self, now: f64) -> Result<(), SessionError> {
        let now = self.tick(now);
        if self.phase != Phase::DefectSelected {
            return Err(self.fail(SessionError::IllegalTransition { from: self.phase, op: "begin_repair" }));
        }
        if self.work.as_ref().is_some_and(|w| w.repair_start.is_none()) {
            self.end_reading(now);
            let w = self.work.as_mut().expect("defect selected");
            w.repair_start = Some(now.max(w.cursor));
            self.publish_state();
        }
        Ok(())
    }

    /// Repair done; the documentation form opens.
    pub fn finish_repair(&mut self, now: f64) -> Result<Phase, SessionError> {
        let now = self.tick(now);
        if self.phase != Phase::DefectSelected {
            return Err(self.fail(SessionError::IllegalTransition { from: self.phase, op: "finish_repair" }));
        }
        self.begin_repair(now)?;
        let start = self.work.as_ref().and_then(|w| w.repair_start).expect("repair started");
        self.record(5, start, now);
        self.work.as_mut().expect("defect selected").finished_at = Some(now);
        self.phase = Phase::Documenting;
        self.publish_state();
        Ok(self.phase)
    }

    /// Stores the documentation record. The twin closes the defect for a
    /// `repaired` outcome; the session then returns to the defect list, or to
    /// idle once the blade has no open defects left.
    pub fn document_repair(&mut self, record: DocumentationRecord, now: f64) -> Result<Phase, SessionError> {
        let now = self.tick(now);
        if self.phase != Phase::Documenting {
            return Err(self.fail(SessionError::IllegalTransition { from: self.phase, op: "document_repair" }));
        }
        let w = self.work.clone().expect("documenting a defect");
        if record.defect_id != w.defect_id {
            return Err(self.fail(SessionError::NotFound(format!(
                "documentation for {:?} while documenting {:?}",
                record.defect_id, w.defect_id
            ))));
        }
        let serial = self.serial.clone().expect("active blade");
        if let Err(e) = self.store.append_documentation(&serial, record) {
            return Err(self.fail(e.into()));
        }
        self.record(6, w.finished_at.unwrap_or(now), now);
        self.work = None;
        let open = self.store.list_open_defects(&serial)?;
        if open.is_empty() {
            self.reset();
        } else {
            self.phase = Phase::ObjectIdentified;
            self.refresh_overlay(self.pose.as_ref().is_some_and(|p| p.stale));
        }
        self.last_error = None;
        self.publish_state();
        Ok(self.phase)
    }

    fn reset(&mut self) {
        self.phase = Phase::Idle;
        self.serial = None;
        self.work = None;
        self.pose = None;
        self.overlay = None;
    }

    /// Abandons the current blade. Its unfinished log entries are dropped.
    pub fn abort(&mut self, now: f64) -> Phase {
        self.tick(now);
        if self.phase != Phase::Idle {
            self.log.truncate(self.blade_log_start);
        }
        self.reset();
        self.publish_state();
        self.phase
    }

    fn refresh_overlay(&mut self, stale: bool) {
        let Some(p) = &mut self.pose else { return };
        p.stale = stale;
        let Some(cam) = self.config.cameras.iter().find(|c| c.id == self.config.ar_camera) else { return };
        let Some(serial) = &self.serial else { return };
        let Ok(asset) = self.store.asset(serial) else { return };
        let selected = self.work.as_ref().map(|w| w.defect_id.as_str());
        match compute_overlays(&p.pose, p.timestamp, cam, &asset, &self.layers, selected, self.config.nearby_radius_mm, stale)
        {
            Ok(frame) => {
                self.overlay = Some(frame.clone());
                self.outbox.push(Notification::Overlay(frame));
            }
            Err(e) => {
                self.last_error = Some(e.to_string());
                self.outbox.push(Notification::Error { message: e.to_string() });
            }
        }
    }

    /// Hands left the work area: estimate the pose from the captured views and
    /// recompute the overlay. On failure the previous pose is kept and the
    /// overlay is marked stale. Ignored while idle.
    pub fn on_hands_cleared(&mut self, views: &[CameraView], now: f64) -> Option<AROverlayFrame> {
        let now = self.tick(now);
        if self.phase == Phase::Idle {
            return None;
        }
        let asset = self.asset().ok()?;
        let model = self.models.get(&asset.model_id)?.clone();
        self.pose_runs += 1;
        match estimate_pose(views, &model.descriptor, &self.config.cameras, &self.config.pose_params) {
            Ok(est) => {
                self.pose = Some(CurrentPose {
                    pose: est.hypothesis.pose,
                    timestamp: now,
                    stale: false,
                    votes: est.hypothesis.votes,
                    residual: est.hypothesis.icp_residual,
                });
                self.last_error = None;
                self.refresh_overlay(false);
            }
            Err(e) => {
                let msg = match e {
                    PoseError::NoObject => "pose estimation: no object in view".to_string(),
                    e => format!("pose estimation: {e}"),
                };
                self.last_error = Some(msg.clone());
                self.outbox.push(Notification::Error { message: msg });
                self.refresh_overlay(true);
            }
        }
        self.publish_state();
        self.overlay.clone()
    }

    /// Hands entered the work area. Starts the repair of a selected defect
    /// once its overlay has been shown.
    pub fn on_hands_entered(&mut self, now: f64) {
        if self.phase == Phase::DefectSelected && self.overlay.is_some() {
            let _ = self.begin_repair(now);
        }
    }

    /// Switches one layer and recomputes the overlay from the cached pose.
    pub fn toggle_layer(&mut self, layer: OverlayLayer, enabled: bool) -> Result<Option<AROverlayFrame>, SessionError> {
        if self.phase == Phase::Idle {
            return Err(self.fail(SessionError::IllegalTransition { from: self.phase, op: "toggle_layer" }));
        }
        if enabled {
            self.layers.insert(layer);
        } else {
            self.layers.remove(&layer);
        }
        let stale = self.pose.as_ref().is_some_and(|p| p.stale);
        self.refresh_overlay(stale);
        self.publish_state();
        Ok(self.overlay.clone())
    }

    pub fn session_log(&self) -> &[ActionRecord] {
        &self.log
    }
}

/// Scripted stand-in for the operator, used to run scenarios without a UI.
///
/// After each scan it selects the first open defect, optionally opens the
/// zone and wall-thickness details, starts the repair when the hands enter
/// the work area after the overlay was shown, finishes it when they leave
/// again and submits the documentation a fixed delay later.
#[derive(Debug, Clone)]
pub struct HeadlessOperator {
    pub worker_id: String,
    pub select_delay_s: f64,
    pub zone_view_s: Option<f64>,
    pub thickness_view_s: Option<f64>,
    pub document_delay_s: f64,
}

impl Default for HeadlessOperator {
    fn default() -> Self {
        HeadlessOperator {
            worker_id: "headless".into(),
            select_delay_s: 2.0,
            zone_view_s: Some(3.0),
            thickness_view_s: Some(2.0),
            document_delay_s: 10.0,
        }
    }
}

#[derive(Debug, Clone)]
enum Pending {
    Select,
    View(DetailKind, f64),
    Document,
}

/// Outcome of one headless run.
#[derive(Debug, Clone, Default)]
pub struct HeadlessReport {
    pub overlays: Vec<AROverlayFrame>,
    /// Ground truth and estimated pose for every frame that produced an overlay.
    pub poses: Vec<(RigidTransform, RigidTransform)>,
    pub errors: Vec<String>,
}

impl HeadlessOperator {
    /// Feeds the simulator events through `session`, acting on the operator's
    /// behalf. Operator actions are interleaved with the events by time.
    pub fn run(&self, session: &mut Session, events: &[SimEvent]) -> HeadlessReport {
        let mut report = HeadlessReport::default();
        let mut pending: Vec<(f64, Pending)> = Vec::new();
        for ev in events {
            self.flush(session, &mut pending, ev.timestamp(), &mut report);
            match ev {
                SimEvent::Scan(s) => match session.on_scan(&s.serial, s.timestamp) {
                    Ok(_) => pending.push((s.timestamp + self.select_delay_s, Pending::Select)),
                    Err(e) => report.errors.push(e.to_string()),
                },
                SimEvent::Hands(h) => {
                    if h.present {
                        session.on_hands_entered(h.timestamp);
                    } else if session.phase() == Phase::DefectSelected
                        && session.work.as_ref().is_some_and(|w| w.repair_start.is_some())
                    {
                        match session.finish_repair(h.timestamp) {
                            Ok(_) => pending.push((h.timestamp + self.document_delay_s, Pending::Document)),
                            Err(e) => report.errors.push(e.to_string()),
                        }
                    }
                }
                SimEvent::FrameReady(f) => self.on_frame(session, f, &mut report),
            }
        }
        self.flush(session, &mut pending, f64::INFINITY, &mut report);
        report
    }

    fn on_frame(&self, session: &mut Session, f: &FrameReady, report: &mut HeadlessReport) {
        let before = session.pose_estimations();
        let overlay = session.on_hands_cleared(&f.views, f.timestamp);
        if session.pose_estimations() == before {
            return;
        }
        if let Some(o) = overlay {
            if !o.stale {
                if let (Some((_, truth)), Some((est, _))) = (&f.ground_truth, session.current_pose()) {
                    report.poses.push((truth.clone(), est.clone()));
                }
            }
            report.overlays.push(o);
        }
        if let Some(e) = &session.last_error {
            report.errors.push(e.clone());
        }
    }

    fn flush(&self, session: &mut Session, pending: &mut Vec<(f64, Pending)>, until: f64, report: &mut HeadlessReport) {
        loop {
            pending.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pending.first().is_none_or(|p| p.0 > until) {
                return;
            }
            let (t, action) = pending.remove(0);
            match action {
                Pending::Select => {
                    let Some(first) = session.view().open_defects.first().map(|d| d.id.clone()) else { continue };
                    if let Err(e) = session.select_defect(&first, t) {
                        report.errors.push(e.to_string());
                        continue;
                    }
                    let mut at = t + 1.0;
                    for (kind, dur) in [(DetailKind::Zone, self.zone_view_s), (DetailKind::WallThickness, self.thickness_view_s)] {
                        if let Some(d) = dur {
                            pending.push((at + d, Pending::View(kind, at)));
                            at += d;
                        }
                    }
                }
                Pending::View(kind, start) => {
                    if session.phase() == Phase::DefectSelected {
                        if let Err(e) = session.detail_viewed(kind, start, t) {
                            report.errors.push(e.to_string());
                        }
                    }
                }
                Pending::Document => {
                    let Some(w) = session.work.clone() else { continue };
                    let started = w.repair_start.unwrap_or(t);
                    let finished = w.finished_at.unwrap_or(t);
                    let record = DocumentationRecord {
                        defect_id: w.defect_id.clone(),
                        worker_id: self.worker_id.clone(),
                        started_at_s: started,
                        finished_at_s: finished,
                        duration_s: finished - started,
                        notes: "blended and inspected".into(),
                        outcome: Outcome::Repaired,
                    };
                    match session.document_repair(record, t) {
                        Ok(Phase::ObjectIdentified) => pending.push((t + self.select_delay_s, Pending::Select)),
                        Ok(_) => {}
                        Err(e) => report.errors.push(e.to_string()),
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_inside_outside_and_crossing() {
        assert_eq!(clip_segment([1.0, 1.0], [5.0, 5.0], 10.0, 10.0), Some(([1.0, 1.0], [5.0, 5.0])));
        assert_eq!(clip_segment([-5.0, -5.0], [-1.0, -1.0], 10.0, 10.0), None);
        let (a, b) = clip_segment([-5.0, 5.0], [15.0, 5.0], 10.0, 10.0).unwrap();
        assert_eq!(a, [0.0, 5.0]);
        assert_eq!(b, [10.0, 5.0]);
    }
}
