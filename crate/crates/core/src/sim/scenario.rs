//! Scripted scenarios and the event stream they produce.
//!
//! Script files are line oriented:
//!
//! ```text
//! noise_sigma=0.0005
//! cameras=cam1,cam2
//! seed=7                      # optional, noise seed
//! t=0 scan SN-1001
//! t=3 place SN-1001 1 0 0 0 1 0 0 0 1 0.1 0.0 0.02
//! t=3 hands 1
//! t=6 hands 0
//! ```
//!
//! `place` takes the OBJECT→WORLD transform as 12 row-major numbers.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::mesh::TriangleMesh;
use super::render::{add_noise, render_cloud, synth_detection};
use super::SimError;
use crate::geometry::Frame;
use crate::pose::CameraView;
use crate::{CameraConfig, RigidTransform};

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptAction {
    Place { serial: String, pose: RigidTransform },
    Scan { serial: String },
    Hands { present: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptEvent {
    pub time: f64,
    pub action: ScriptAction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioScript {
    pub noise_sigma: f64,
    pub cameras: Vec<String>,
    pub seed: u64,
    pub events: Vec<ScriptEvent>,
}

impl ScenarioScript {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.noise_sigma >= 0.0) {
            return Err(SimError::Script { line: 0, reason: "noise_sigma must be non-negative".into() });
        }
        let mut last = f64::NEG_INFINITY;
        for e in &self.events {
            if !e.time.is_finite() || e.time < last {
                return Err(SimError::Script { line: 0, reason: format!("time {} out of order", e.time) });
            }
            last = e.time;
            match &e.action {
                ScriptAction::Place { serial, .. } | ScriptAction::Scan { serial } if serial.is_empty() => {
                    return Err(SimError::Script { line: 0, reason: "empty serial".into() });
                }
                _ => {}
            }
        }
        Ok(())
    }
}

pub fn parse_scenario(text: &str) -> Result<ScenarioScript, SimError> {
    let mut script = ScenarioScript { noise_sigma: 0.0, cameras: Vec::new(), seed: 0, events: Vec::new() };
    let mut last = f64::NEG_INFINITY;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| SimError::Script { line: i + 1, reason };
        if let Some(v) = line.strip_prefix("noise_sigma=") {
            script.noise_sigma = v
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|s| *s >= 0.0 && s.is_finite())
                .ok_or_else(|| err(format!("bad noise_sigma {v:?}")))?;
            continue;
        }
        if let Some(v) = line.strip_prefix("cameras=") {
            script.cameras = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            continue;
        }
        if let Some(v) = line.strip_prefix("seed=") {
            script.seed = v.trim().parse().map_err(|_| err(format!("bad seed {v:?}")))?;
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        let time = tok
            .first()
            .and_then(|t| t.strip_prefix("t="))
            .and_then(|t| t.parse::<f64>().ok())
            .filter(|t| t.is_finite())
            .ok_or_else(|| err(format!("expected t=<sec>, got {line:?}")))?;
        if time < last {
            return Err(err(format!("time {time} earlier than previous {last}")));
        }
        last = time;
        let action = match tok.get(1..).unwrap_or(&[]) {
            ["scan", serial] => ScriptAction::Scan { serial: serial.to_string() },
            ["hands", "0"] => ScriptAction::Hands { present: false },
            ["hands", "1"] => ScriptAction::Hands { present: true },
            ["place", serial, rest @ ..] if rest.len() == 12 => {
                let vals = rest
                    .iter()
                    .map(|s| s.parse::<f64>().map_err(|_| err(format!("bad number {s:?}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                let pose = RigidTransform::from_row_major(&vals, Frame::Object, Frame::World)
                    .map_err(|e| err(e.to_string()))?;
                ScriptAction::Place { serial: serial.to_string(), pose }
            }
            _ => return Err(err(format!("unrecognised event {line:?}"))),
        };
        script.events.push(ScriptEvent { time, action });
    }
    Ok(script)
}

pub fn format_scenario(script: &ScenarioScript) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "noise_sigma={}", script.noise_sigma);
    let _ = writeln!(s, "cameras={}", script.cameras.join(","));
    let _ = writeln!(s, "seed={}", script.seed);
    for e in &script.events {
        let _ = write!(s, "t={} ", e.time);
        match &e.action {
            ScriptAction::Scan { serial } => {
                let _ = writeln!(s, "scan {serial}");
            }
            ScriptAction::Hands { present } => {
                let _ = writeln!(s, "hands {}", u8::from(*present));
            }
            ScriptAction::Place { serial, pose } => {
                let _ = write!(s, "place {serial}");
                for v in pose.to_row_major() {
                    let _ = write!(s, " {v}");
                }
                s.push('\n');
            }
        }
    }
    s
}

/// A decoded Data Matrix payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEvent {
    pub serial: String,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandPresenceEvent {
    pub present: bool,
    pub timestamp: f64,
}

/// Per-camera clouds and detections captured when the hands left the work area.
#[derive(Debug, Clone)]
pub struct FrameReady {
    pub timestamp: f64,
    pub views: Vec<CameraView>,
    /// Serial and OBJECT→WORLD pose of the object in view when the frame was taken.
    pub ground_truth: Option<(String, RigidTransform)>,
}

#[derive(Debug, Clone)]
pub enum SimEvent {
    Scan(ScanEvent),
    Hands(HandPresenceEvent),
    FrameReady(FrameReady),
}

impl SimEvent {
    pub fn timestamp(&self) -> f64 {
        match self {
            SimEvent::Scan(e) => e.timestamp,
            SimEvent::Hands(e) => e.timestamp,
            SimEvent::FrameReady(f) => f.timestamp,
        }
    }
}

/// Scene generator standing in for the depth cameras, scanner and hand sensor.
#[derive(Debug, Clone)]
pub struct Simulator {
    cameras: Vec<CameraConfig>,
    objects: HashMap<String, Arc<TriangleMesh>>,
    pub pixel_stride: usize,
    pub detection_margin_px: f64,
}

impl Simulator {
    pub fn new(cameras: Vec<CameraConfig>) -> Self {
        Simulator { cameras, objects: HashMap::new(), pixel_stride: 4, detection_margin_px: 8.0 }
    }

    /// Registers the geometry of the physical part carrying `serial`.
    pub fn with_object(mut self, serial: impl Into<String>, mesh: Arc<TriangleMesh>) -> Self {
        self.objects.insert(serial.into(), mesh);
        self
    }

    pub fn cameras(&self) -> &[CameraConfig] {
        &self.cameras
    }

    fn validate(&self, script: &ScenarioScript) -> Result<(), SimError> {
        script.validate()?;
        for id in &script.cameras {
            if !self.cameras.iter().any(|c| &c.id == id) {
                return Err(SimError::UnknownCamera(id.clone()));
            }
        }
        for e in &script.events {
            if let ScriptAction::Place { serial, .. } = &e.action {
                if !self.objects.contains_key(serial) {
                    return Err(SimError::UnknownSerial(serial.clone()));
                }
            }
        }
        Ok(())
    }

    /// Renders the current object into every active camera.
    pub fn capture(
        &self,
        script: &ScenarioScript,
        object: Option<&(String, RigidTransform)>,
        frame_index: u64,
    ) -> Result<Vec<CameraView>, SimError> {
        let mut views = Vec::new();
        for (ci, id) in script.cameras.iter().enumerate() {
            let cam = self
                .cameras
                .iter()
                .find(|c| &c.id == id)
                .ok_or_else(|| SimError::UnknownCamera(id.clone()))?;
            let view = match object {
                Some((serial, pose)) => {
                    let mesh = &self.objects[serial];
                    let cloud = render_cloud(mesh, pose, cam, self.pixel_stride)?;
                    let seed = script
                        .seed
                        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                        .wrapping_add(frame_index << 16 | ci as u64);
                    let cloud = add_noise(&cloud, script.noise_sigma, seed)?;
                    let detection = synth_detection(mesh, pose, cam, self.detection_margin_px).ok();
                    CameraView { camera_id: id.clone(), cloud, detection }
                }
                None => CameraView {
                    camera_id: id.clone(),
                    cloud: crate::pose::PointCloud::empty(Frame::World),
                    detection: None,
                },
            };
            views.push(view);
        }
        Ok(views)
    }

    /// Plays the script. A frame is captured on every hands-present falling
    /// edge; hands are assumed present before the first hands event.
    pub fn run(&self, script: &ScenarioScript) -> Result<Vec<SimEvent>, SimError> {
        self.validate(script)?;
        let mut out = Vec::new();
        let mut hands = true;
        let mut object: Option<(String, RigidTransform)> = None;
        let mut frames = 0u64;
        for e in &script.events {
            match &e.action {
                ScriptAction::Scan { serial } => {
                    out.push(SimEvent::Scan(ScanEvent { serial: serial.clone(), timestamp: e.time }))
                }
                ScriptAction::Place { serial, pose } => object = Some((serial.clone(), pose.clone())),
                ScriptAction::Hands { present } => {
                    out.push(SimEvent::Hands(HandPresenceEvent { present: *present, timestamp: e.time }));
                    if hands && !present {
                        let views = self.capture(script, object.as_ref(), frames)?;
                        frames += 1;
                        out.push(SimEvent::FrameReady(FrameReady {
                            timestamp: e.time,
                            views,
                            ground_truth: object.clone(),
                        }));
                    }
                    hands = *present;
                }
            }
        }
        Ok(out)
    }
}
