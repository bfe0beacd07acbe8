//! Point pair features, the model hash table and the voting matcher.
//!
//! Each oriented model point `(m_r, n_r)` is moved to the origin with its
//! normal on the +x axis. A second point `m_i` then only has one rotational
//! degree of freedom left, the angle about x that brings it into the +y half
//! plane (`α_m`). A scene pair with the same feature and angle `α_s` votes for
//! the model reference `r` and the angle `α = α_m − α_s`; the peak of that
//! two-dimensional accumulator fixes a full 6-DoF pose.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cloud::{voxel_downsample, PointCloud};
use super::PoseError;
use crate::geometry::Frame;
use crate::spatial::KdTree;
use crate::RigidTransform;

/// Distance and the three angles of an oriented point pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointPairFeature {
    pub d: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

pub fn compute_ppf(
    p1: &Vector3<f64>,
    n1: &Vector3<f64>,
    p2: &Vector3<f64>,
    n2: &Vector3<f64>,
) -> Result<PointPairFeature, PoseError> {
    let d = p2 - p1;
    let dist = d.norm();
    if dist < 1e-12 {
        return Err(PoseError::DegeneratePair);
    }
    Ok(PointPairFeature {
        d: dist,
        a1: angle_between(n1, &d),
        a2: angle_between(n2, &d),
        a3: angle_between(n1, n2),
    })
}

/// Quantized feature used as the hash key.
pub type FeatureKey = [u32; 4];

/// One hash table entry: model reference index and its rotation angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub reference: u32,
    pub alpha: f64,
}

/// Rotation taking `n` onto +x, and the transform moving `p` to the origin.
pub(crate) fn align_to_x(p: &Vector3<f64>, n: &Vector3<f64>) -> (Matrix3<f64>, Vector3<f64>) {
    let x = Vector3::x();
    let axis = n.cross(&x);
    let s = axis.norm();
    let c = n.dot(&x);
    let r = if s < 1e-12 {
        if c > 0.0 {
            Matrix3::identity()
        } else {
            *Rotation3::from_axis_angle(&Vector3::z_axis(), PI).matrix()
        }
    } else {
        *Rotation3::from_axis_angle(&Unit::new_unchecked(axis / s), s.atan2(c)).matrix()
    };
    (r, -(r * p))
}

/// Angle about +x that rotates the aligned point `q` into the +y half plane.
#[inline]
fn alpha_of(r: &Matrix3<f64>, t: &Vector3<f64>, q: &Vector3<f64>) -> f64 {
    let a = r * q + t;
    -a.z.atan2(a.y)
}

/// Quantized point-pair-feature table for one object model.
#[derive(Debug, Clone)]
pub struct ModelDescriptor {
    pub(crate) dist_step: f64,
    pub(crate) angle_step: f64,
    pub(crate) diameter: f64,
    pub(crate) table: HashMap<FeatureKey, Vec<ModelEntry>>,
    pub(crate) sampled_model: PointCloud,
    pub(crate) surface_model: PointCloud,
}

impl ModelDescriptor {
    pub fn dist_step(&self) -> f64 {
        self.dist_step
    }
    pub fn angle_step(&self) -> f64 {
        self.angle_step
    }
    pub fn diameter(&self) -> f64 {
        self.diameter
    }
    pub fn table(&self) -> &HashMap<FeatureKey, Vec<ModelEntry>> {
        &self.table
    }
    pub fn table_entries(&self) -> usize {
        self.table.values().map(Vec::len).sum()
    }
    /// Subsampled model with normals; the points the table is built from.
    pub fn sampled_model(&self) -> &PointCloud {
        &self.sampled_model
    }
    /// Full-resolution model surface with normals, used for ICP refinement.
    pub fn surface_model(&self) -> &PointCloud {
        &self.surface_model
    }

    /// Hash key of a feature, or `None` beyond the model diameter.
    pub fn key(&self, f: &PointPairFeature) -> Option<FeatureKey> {
        if f.d > self.diameter {
            return None;
        }
        let q = |a: f64| (a / self.angle_step).floor() as u32;
        Some([(f.d / self.dist_step).floor() as u32, q(f.a1), q(f.a2), q(f.a3)])
    }

    pub fn lookup(&self, f: &PointPairFeature) -> &[ModelEntry] {
        self.key(f).and_then(|k| self.table.get(&k)).map_or(&[], Vec::as_slice)
    }

    pub(crate) fn validate(&self) -> Result<(), PoseError> {
        if !(self.dist_step > 0.0) || !(self.diameter > 0.0) {
            return Err(PoseError::InvalidParameter("descriptor steps must be positive".into()));
        }
        check_angle_step(self.angle_step)?;
        let n = self.sampled_model.len() as u32;
        if self.table.values().flatten().any(|e| e.reference >= n) {
            return Err(PoseError::InvalidParameter("table references a missing model point".into()));
        }
        self.sampled_model.require_normals()?;
        self.surface_model.require_normals()?;
        Ok(())
    }
}

fn check_angle_step(angle_step: f64) -> Result<(), PoseError> {
    let bins = TAU / angle_step;
    if !(angle_step > 0.0) || (bins - bins.round()).abs() * angle_step > 1e-9 {
        return Err(PoseError::InvalidParameter(format!("angle step {angle_step} does not divide 2π")));
    }
    Ok(())
}

/// Subsamples the model at `dist_step_rel × diameter` and hashes every ordered
/// pair of sampled points.
pub fn build_descriptor(model: &PointCloud, dist_step_rel: f64, angle_step: f64) -> Result<ModelDescriptor, PoseError> {
    if model.is_empty() {
        return Err(PoseError::EmptyModel);
    }
    model.require_normals()?;
    if !(dist_step_rel > 0.0) {
        return Err(PoseError::InvalidParameter(format!("dist_step_rel {dist_step_rel} must be positive")));
    }
    check_angle_step(angle_step)?;
    let (_, mut diameter) = model.bounding_sphere().ok_or(PoseError::EmptyModel)?;
    if diameter <= 0.0 {
        // Single point: any positive scale works.
        diameter = 1.0;
    }
    let dist_step = dist_step_rel * diameter;
    let sampled = voxel_downsample(model, dist_step)?;
    let pts = sampled.points();
    let nrm = sampled.require_normals()?;

    let mut desc = ModelDescriptor {
        dist_step,
        angle_step,
        diameter,
        table: HashMap::new(),
        sampled_model: sampled.clone(),
        surface_model: model.clone(),
    };
    let rows: Vec<Vec<(FeatureKey, ModelEntry)>> = (0..pts.len())
        .into_par_iter()
        .map(|r| {
            let (rot, t) = align_to_x(&pts[r], &nrm[r]);
            (0..pts.len())
                .filter(|&i| i != r)
                .filter_map(|i| {
                    let f = compute_ppf(&pts[r], &nrm[r], &pts[i], &nrm[i]).ok()?;
                    let key = desc.key(&f)?;
                    Some((key, ModelEntry { reference: r as u32, alpha: alpha_of(&rot, &t, &pts[i]) }))
                })
                .collect()
        })
        .collect();
    for (key, entry) in rows.into_iter().flatten() {
        desc.table.entry(key).or_default().push(entry);
    }
    Ok(desc)
}

/// A candidate OBJECT→scene pose with its vote count and optional ICP residual.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseHypothesis {
    pub pose: RigidTransform,
    pub votes: u32,
    pub icp_residual: Option<f64>,
}

fn pose_from_alignment(
    scene_r: &Matrix3<f64>,
    scene_t: &Vector3<f64>,
    model_r: &Matrix3<f64>,
    model_t: &Vector3<f64>,
    alpha: f64,
    to: &Frame,
) -> RigidTransform {
    let rx = *Rotation3::from_axis_angle(&Vector3::x_axis(), alpha).matrix();
    // T = T_s⁻¹ · R_x(α) · T_m
    let sr_inv = scene_r.transpose();
    let rot = sr_inv * rx * model_r;
    let trans = sr_inv * (rx * model_t - scene_t);
    RigidTransform::new(rot, trans, Frame::Object, to.clone())
        .unwrap_or_else(|_| RigidTransform::identity(Frame::Object, to.clone()))
}

/// Runs the voting scheme for every `ref_stride`-th scene point and returns one
/// hypothesis per reference point that received votes, sorted by votes.
pub fn match_scene(
    scene: &PointCloud,
    desc: &ModelDescriptor,
    ref_stride: usize,
    alpha_bins: usize,
) -> Result<Vec<PoseHypothesis>, PoseError> {
    if scene.len() < 2 {
        return Err(PoseError::TooFewPoints { needed: 2, found: scene.len() });
    }
    if ref_stride == 0 || alpha_bins == 0 {
        return Err(PoseError::InvalidParameter("ref_stride and alpha_bins must be positive".into()));
    }
    let pts = scene.points();
    let nrm = scene.require_normals()?;
    let tree = KdTree::build(pts);
    let model = desc.sampled_model.points();
    let model_n = desc.sampled_model.require_normals()?;
    let bin_width = TAU / alpha_bins as f64;
    let n_model = model.len();

    let refs: Vec<usize> = (0..pts.len()).step_by(ref_stride).collect();
    let mut hyps: Vec<(usize, PoseHypothesis)> = refs
        .par_iter()
        .filter_map(|&r| {
            let (sr, st) = align_to_x(&pts[r], &nrm[r]);
            let mut votes = vec![0u32; n_model * alpha_bins];
            let mut alpha_sum = vec![0f64; n_model * alpha_bins];
            for i in tree.within(&pts[r], desc.diameter) {
                if i == r {
                    continue;
                }
                let Ok(f) = compute_ppf(&pts[r], &nrm[r], &pts[i], &nrm[i]) else { continue };
                let entries = desc.lookup(&f);
                if entries.is_empty() {
                    continue;
                }
                let alpha_s = alpha_of(&sr, &st, &pts[i]);
                for e in entries {
                    let a = (e.alpha - alpha_s).rem_euclid(TAU);
                    let bin = ((a / bin_width) as usize).min(alpha_bins - 1);
                    let slot = e.reference as usize * alpha_bins + bin;
                    votes[slot] += 1;
                    alpha_sum[slot] += a;
                }
            }
            let (slot, &best) = votes
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
            if best == 0 {
                return None;
            }
            let m = slot / alpha_bins;
            let alpha = alpha_sum[slot] / best as f64;
            let (mr, mt) = align_to_x(&model[m], &model_n[m]);
            let pose = pose_from_alignment(&sr, &st, &mr, &mt, alpha, scene.frame());
            Some((r, PoseHypothesis { pose, votes: best, icp_residual: None }))
        })
        .collect();
    hyps.sort_by(|a, b| b.1.votes.cmp(&a.1.votes).then(a.0.cmp(&b.0)));
    Ok(hyps.into_iter().map(|(_, h)| h).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn ppf_examples() {
        let z = Vector3::z();
        let f = compute_ppf(&Vector3::zeros(), &z, &Vector3::new(0.0, 0.0, 1.0), &z).unwrap();
        assert_eq!((f.d, f.a1, f.a2, f.a3), (1.0, 0.0, 0.0, 0.0));
        let f = compute_ppf(&Vector3::zeros(), &z, &Vector3::new(1.0, 0.0, 0.0), &z).unwrap();
        assert!((f.d - 1.0).abs() < 1e-15);
        assert!((f.a1 - FRAC_PI_2).abs() < 1e-15 && (f.a2 - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(f.a3, 0.0);
        assert!(matches!(compute_ppf(&z, &z, &z, &z), Err(PoseError::DegeneratePair)));
    }

    #[test]
    fn alignment_maps_normal_to_x() {
        for n in [Vector3::x(), -Vector3::x(), Vector3::new(0.3, -0.4, 0.8).normalize()] {
            let p = Vector3::new(0.1, 0.2, 0.3);
            let (r, t) = align_to_x(&p, &n);
            assert!((r * n - Vector3::x()).norm() < 1e-12);
            assert!((r * p + t).norm() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_point_model_has_both_orderings() {
        let c = PointCloud::with_normals(
            Frame::Object,
            vec![Vector3::zeros(), Vector3::new(0.1, 0.0, 0.0)],
            vec![Vector3::z(), Vector3::y()],
        )
        .unwrap();
        let d = build_descriptor(&c, 0.05, TAU / 30.0).unwrap();
        assert_eq!(d.sampled_model().len(), 2);
        assert_eq!(d.table_entries(), 2);
        let refs: Vec<u32> = d.table.values().flatten().map(|e| e.reference).collect();
        assert!(refs.contains(&0) && refs.contains(&1));
    }

    #[test]
    fn descriptor_rejects_bad_input() {
        assert!(matches!(
            build_descriptor(&PointCloud::empty(Frame::Object), 0.05, TAU / 30.0),
            Err(PoseError::EmptyModel)
        ));
        let c = PointCloud::new(Frame::Object, vec![Vector3::zeros()]).unwrap();
        assert!(matches!(build_descriptor(&c, 0.05, TAU / 30.0), Err(PoseError::MissingNormals)));
        let c = PointCloud::with_normals(Frame::Object, vec![Vector3::zeros()], vec![Vector3::z()]).unwrap();
        assert!(build_descriptor(&c, 0.05, 0.7).is_err());
    }
}
