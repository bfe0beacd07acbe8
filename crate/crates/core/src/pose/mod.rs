//! Markerless 6D pose estimation: detection-based cropping, point pair feature
//! voting, hypothesis clustering and point-to-plane ICP refinement.

pub mod cloud;
pub mod cluster;
pub mod descriptor_file;
pub mod icp;
pub mod pipeline;
pub mod ppf;

use thiserror::Error;

pub use cloud::{
    crop_cloud, estimate_normals, estimate_normals_with, voxel_downsample, Detection2D, NormalEstimate, PointCloud,
};
pub use cluster::cluster_hypotheses;
pub use descriptor_file::{load_descriptor, read_descriptor, save_descriptor, write_descriptor};
pub use icp::{icp_point_to_plane, IcpOutcome, IcpParams};
pub use pipeline::{
    estimate_pose, merge_views, CameraView, PipelineStats, PoseEstimate, PoseParams, DEFAULT_ANGLE_STEP,
    DEFAULT_DIST_STEP_REL,
};
pub use ppf::{build_descriptor, compute_ppf, match_scene, FeatureKey, ModelDescriptor, ModelEntry, PointPairFeature, PoseHypothesis};

#[derive(Debug, Error)]
pub enum PoseError {
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),
    #[error("point cloud has no normals")]
    MissingNormals,
    #[error("need at least {needed} points, found {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("coincident points in pair feature")]
    DegeneratePair,
    #[error("model is empty")]
    EmptyModel,
    #[error("invalid detection: {0}")]
    InvalidDetection(String),
    #[error("detection or cloud refers to unknown or mismatched camera {0:?}")]
    CameraMismatch(String),
    #[error("no object found in the cropped scene")]
    NoObject,
    #[error("ICP under-constrained: {correspondences} correspondences")]
    UnderConstrained { correspondences: usize },
    #[error("ICP normal equations are singular (condition {condition:e})")]
    SingularSystem { condition: f64 },
    #[error("descriptor file: {0}")]
    DescriptorFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
