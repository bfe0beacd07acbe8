//! Synthetic stand-ins for the depth cameras, barcode scanner and hand sensor.

pub mod mesh;
pub mod render;
pub mod scenario;

use thiserror::Error;

pub use mesh::TriangleMesh;
pub use render::{add_noise, render_cloud, synth_detection};
pub use scenario::{
    format_scenario, parse_scenario, FrameReady, HandPresenceEvent, ScanEvent, ScenarioScript, ScriptAction,
    ScriptEvent, SimEvent, Simulator,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Pose(#[from] crate::pose::PoseError),
    #[error(transparent)]
    Ply(#[from] crate::ply::PlyError),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("object not visible in camera {0}")]
    NoDetection(String),
    #[error("scenario line {line}: {reason}")]
    Script { line: usize, reason: String },
    #[error("scenario places unknown serial {0:?}")]
    UnknownSerial(String),
    #[error("scenario uses unknown camera {0:?}")]
    UnknownCamera(String),
}
