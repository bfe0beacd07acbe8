//! Point-to-plane ICP with a small-angle linearization.

use nalgebra::{Matrix6, SymmetricEigen, Vector3, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cloud::PointCloud;
use super::PoseError;
use crate::spatial::KdTree;
use crate::RigidTransform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Stop once an accepted step improves the RMS residual by less than this (meters).
    pub convergence_tol: f64,
    /// Correspondences farther apart than this (meters) are ignored.
    pub correspondence_gate: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams { max_iterations: 50, convergence_tol: 1e-6, correspondence_gate: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpOutcome {
    pub pose: RigidTransform,
    /// Final RMS point-to-plane distance (meters).
    pub residual: f64,
    /// Number of linearized solves performed.
    pub iterations: usize,
    /// Residual of the initial pose followed by that of every accepted step.
    pub residual_history: Vec<f64>,
}

const MIN_CORRESPONDENCES: usize = 6;

struct Correspondences {
    /// (source point in target frame, target point, target normal)
    pairs: Vec<(Vector3<f64>, Vector3<f64>, Vector3<f64>)>,
    rms: f64,
}

fn correspond(
    src: &[Vector3<f64>],
    tree: &KdTree<'_>,
    normals: &[Vector3<f64>],
    pose: &RigidTransform,
    gate: f64,
) -> Correspondences {
    let gate2 = gate * gate;
    let pairs: Vec<_> = src
        .par_iter()
        .filter_map(|p| {
            let q = pose.apply(p);
            let (j, d2) = tree.nearest(&q)?;
            (d2 <= gate2).then(|| (q, tree.points()[j], normals[j]))
        })
        .collect();
    let sum: f64 = pairs.iter().map(|(p, q, n)| (p - q).dot(n).powi(2)).sum();
    let rms = if pairs.is_empty() { f64::INFINITY } else { (sum / pairs.len() as f64).sqrt() };
    Correspondences { pairs, rms }
}

/// Refines `init` (source frame → target frame) by minimizing
/// `Σ ((R·p + t − q)·n_q)²` over gated nearest-neighbour correspondences.
///
/// A step whose residual would exceed the current one is rejected and ends the
/// iteration, so the accepted residual sequence is non-increasing.
pub fn icp_point_to_plane(
    source: &PointCloud,
    target: &PointCloud,
    init: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpOutcome, PoseError> {
    if source.is_empty() || target.is_empty() {
        return Err(PoseError::TooFewPoints { needed: 1, found: 0 });
    }
    let normals = target.require_normals()?;
    if init.from_frame() != source.frame() || init.to_frame() != target.frame() {
        return Err(PoseError::Geometry(crate::geometry::GeometryError::FrameMismatch {
            expected: source.frame().clone(),
            actual: init.from_frame().clone(),
        }));
    }
    if !(params.correspondence_gate > 0.0) {
        return Err(PoseError::InvalidParameter("correspondence gate must be positive".into()));
    }
    let tree = KdTree::build(target.points());
    let src = source.points();

    let mut pose = init.clone();
    let mut current = correspond(src, &tree, normals, &pose, params.correspondence_gate);
    let mut history = vec![current.rms];
    let mut iterations = 0;

    while iterations < params.max_iterations {
        if current.pairs.len() < MIN_CORRESPONDENCES {
            return Err(PoseError::UnderConstrained { correspondences: current.pairs.len() });
        }
        iterations += 1;

        // Row j: [p × n, n] · [ω, t] = −(p − q)·n
        let mut ata = Matrix6::<f64>::zeros();
        let mut atb = Vector6::<f64>::zeros();
        for (p, q, n) in &current.pairs {
            let c = p.cross(n);
            let row = Vector6::new(c.x, c.y, c.z, n.x, n.y, n.z);
            let r = (p - q).dot(n);
            ata += row * row.transpose();
            atb -= row * r;
        }
        let eig = SymmetricEigen::new(ata);
        let max_ev = eig.eigenvalues.max();
        let min_ev = eig.eigenvalues.min();
        if !(max_ev > 0.0) || min_ev <= 1e-10 * max_ev {
            return Err(PoseError::SingularSystem { condition: if max_ev > 0.0 { min_ev / max_ev } else { 0.0 } });
        }
        let delta = ata
            .cholesky()
            .map(|ch| ch.solve(&atb))
            .ok_or(PoseError::SingularSystem { condition: min_ev / max_ev })?;
        let omega = Vector3::new(delta[0], delta[1], delta[2]);
        let angle = omega.norm();
        let step = RigidTransform::from_axis_angle(
            &if angle > 0.0 { omega } else { Vector3::z() },
            angle,
            Vector3::new(delta[3], delta[4], delta[5]),
            target.frame().clone(),
            target.frame().clone(),
        );
        let candidate_pose = step.compose(&pose)?;
        let candidate = correspond(src, &tree, normals, &candidate_pose, params.correspondence_gate);
        if candidate.pairs.len() < MIN_CORRESPONDENCES || candidate.rms > current.rms {
            break;
        }
        let improvement = current.rms - candidate.rms;
        pose = candidate_pose;
        current = candidate;
        history.push(current.rms);
        if improvement < params.convergence_tol {
            break;
        }
    }
    Ok(IcpOutcome { pose, residual: current.rms, iterations, residual_history: history })
}
