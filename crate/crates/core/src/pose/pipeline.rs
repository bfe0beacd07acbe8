//! The full estimator: crop per camera, merge, normals, voting, clustering, ICP.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::cloud::{crop_indices, estimate_normals_with, voxel_downsample, Detection2D, PointCloud};
use super::cluster::cluster_hypotheses;
use super::icp::{icp_point_to_plane, IcpParams};
use super::ppf::{match_scene, ModelDescriptor, PoseHypothesis};
use super::PoseError;
use crate::geometry::Frame;
use crate::CameraConfig;

/// Tunables of [`estimate_pose`]. Distances relative to the model diameter or
/// the descriptor's distance step so one set of values fits any part size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseParams {
    pub normal_neighbors: usize,
    pub ref_stride: usize,
    pub alpha_bins: usize,
    /// Clustering rotation threshold (radians).
    pub cluster_rotation: f64,
    /// Clustering translation threshold as a fraction of the model diameter.
    pub cluster_translation_rel: f64,
    pub icp_max_iterations: usize,
    pub icp_convergence_tol: f64,
    /// ICP correspondence gate as a multiple of the descriptor distance step.
    pub icp_gate_rel: f64,
    /// Voxel size of the ICP source cloud as a fraction of the distance step.
    pub icp_voxel_rel: f64,
}

impl Default for PoseParams {
    fn default() -> Self {
        PoseParams {
            normal_neighbors: 10,
            ref_stride: 5,
            alpha_bins: 30,
            cluster_rotation: 15f64.to_radians(),
            cluster_translation_rel: 0.10,
            icp_max_iterations: 50,
            icp_convergence_tol: 1e-6,
            icp_gate_rel: 2.0,
            icp_voxel_rel: 0.25,
        }
    }
}

/// Descriptor defaults: 5 % of the diameter, 30 angle bins.
pub const DEFAULT_DIST_STEP_REL: f64 = 0.05;
pub const DEFAULT_ANGLE_STEP: f64 = TAU / 30.0;

/// Cloud and detection from one camera. Clouds may be in WORLD or in that
/// camera's own frame.
#[derive(Debug, Clone)]
pub struct CameraView {
    pub camera_id: String,
    pub cloud: PointCloud,
    pub detection: Option<Detection2D>,
}

/// Scene statistics reported alongside the pose.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub cropped_points: usize,
    pub valid_normals: usize,
    pub matched_points: usize,
    pub hypotheses: usize,
    pub clusters: usize,
    pub icp_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct PoseEstimate {
    pub hypothesis: PoseHypothesis,
    pub stats: PipelineStats,
}

/// Crops every view to its detection and merges the result in WORLD, keeping
/// each point's source camera centre for normal orientation.
pub fn merge_views(
    views: &[CameraView],
    cameras: &[CameraConfig],
) -> Result<(PointCloud, Vec<Vector3<f64>>), PoseError> {
    let mut merged = PointCloud::empty(Frame::World);
    let mut origins = Vec::new();
    for view in views {
        let Some(det) = &view.detection else { continue };
        if det.camera_id != view.camera_id {
            return Err(PoseError::CameraMismatch(det.camera_id.clone()));
        }
        let cam = cameras
            .iter()
            .find(|c| c.id == view.camera_id)
            .ok_or_else(|| PoseError::CameraMismatch(view.camera_id.clone()))?;
        let world = if view.cloud.frame() == &Frame::World {
            view.cloud.clone()
        } else {
            view.cloud.transformed(&cam.camera_to_world())?
        };
        let keep = crop_indices(&world, det, &cam.intrinsics, &cam.world_to_camera)?;
        let cropped = PointCloud::new(Frame::World, keep.iter().map(|&i| world.points()[i]).collect())?;
        origins.extend(std::iter::repeat_n(cam.center(), cropped.len()));
        merged.extend(&cropped)?;
    }
    Ok((merged, origins))
}

/// Estimates the OBJECT→WORLD pose of the model in the given views.
pub fn estimate_pose(
    views: &[CameraView],
    desc: &ModelDescriptor,
    cameras: &[CameraConfig],
    params: &PoseParams,
) -> Result<PoseEstimate, PoseError> {
    let mut stats = PipelineStats::default();
    let (merged, origins) = merge_views(views, cameras)?;
    stats.cropped_points = merged.len();
    if merged.len() <= params.normal_neighbors {
        return Err(PoseError::NoObject);
    }

    let normals = estimate_normals_with(&merged, params.normal_neighbors, |i| origins[i])?;
    let scene = normals.valid_cloud();
    stats.valid_normals = scene.len();
    let matched = voxel_downsample(&scene, desc.dist_step())?;
    stats.matched_points = matched.len();
    if matched.len() < 2 {
        return Err(PoseError::NoObject);
    }

    let hyps = match_scene(&matched, desc, params.ref_stride, params.alpha_bins)?;
    stats.hypotheses = hyps.len();
    let clusters = cluster_hypotheses(
        &hyps,
        params.cluster_rotation,
        params.cluster_translation_rel * desc.diameter(),
    );
    stats.clusters = clusters.len();
    let top_votes = clusters.first().ok_or(PoseError::NoObject)?.votes;

    let icp = IcpParams {
        max_iterations: params.icp_max_iterations,
        convergence_tol: params.icp_convergence_tol,
        correspondence_gate: params.icp_gate_rel * desc.dist_step(),
    };
    let source = voxel_downsample(
        &PointCloud::new(Frame::World, scene.points().to_vec())?,
        params.icp_voxel_rel * desc.dist_step(),
    )?;

    // Scene→model ICP: only the visible surface takes part in the fit.
    let mut best: Option<PoseHypothesis> = None;
    let mut last_err = None;
    for cluster in clusters.iter().take_while(|c| c.votes == top_votes) {
        match icp_point_to_plane(&source, desc.surface_model(), &cluster.pose.inverse(), &icp) {
            Ok(out) => {
                stats.icp_iterations += out.iterations;
                let refined = PoseHypothesis {
                    pose: out.pose.inverse(),
                    votes: cluster.votes,
                    icp_residual: Some(out.residual),
                };
                let better = best
                    .as_ref()
                    .is_none_or(|b| out.residual < b.icp_residual.unwrap_or(f64::INFINITY));
                if better {
                    best = Some(refined);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some(h), _) => Ok(PoseEstimate { hypothesis: h, stats }),
        (None, Some(e)) => Err(e),
        (None, None) => Err(PoseError::NoObject),
    }
}
