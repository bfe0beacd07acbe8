//! Point clouds, normal estimation, voxel subsampling and detection cropping.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PoseError;
use crate::geometry::{project_coords, Frame};
use crate::spatial::KdTree;
use crate::{CameraIntrinsics, RigidTransform};

/// Points (meters) in one frame, optionally with unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    frame: Frame,
    points: Vec<Vector3<f64>>,
    normals: Option<Vec<Vector3<f64>>>,
}

const NORMAL_TOL: f64 = 1e-6;

impl PointCloud {
    pub fn new(frame: Frame, points: Vec<Vector3<f64>>) -> Result<Self, PoseError> {
        if points.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(PoseError::InvalidCloud("non-finite coordinate".into()));
        }
        Ok(PointCloud { frame, points, normals: None })
    }

    pub fn with_normals(
        frame: Frame,
        points: Vec<Vector3<f64>>,
        normals: Vec<Vector3<f64>>,
    ) -> Result<Self, PoseError> {
        let mut c = Self::new(frame, points)?;
        c.set_normals(normals)?;
        Ok(c)
    }

    pub fn empty(frame: Frame) -> Self {
        PointCloud { frame, points: Vec::new(), normals: None }
    }

    pub fn set_normals(&mut self, normals: Vec<Vector3<f64>>) -> Result<(), PoseError> {
        if normals.len() != self.points.len() {
            return Err(PoseError::InvalidCloud(format!(
                "{} normals for {} points",
                normals.len(),
                self.points.len()
            )));
        }
        if let Some(bad) = normals.iter().find(|n| (n.norm() - 1.0).abs() > NORMAL_TOL) {
            return Err(PoseError::InvalidCloud(format!("normal {bad:?} is not unit length")));
        }
        self.normals = Some(normals);
        Ok(())
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }
    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }
    pub fn normals(&self) -> Option<&[Vector3<f64>]> {
        self.normals.as_deref()
    }
    pub fn len(&self) -> usize {
        self.points.len()
    }
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    pub fn require_normals(&self) -> Result<&[Vector3<f64>], PoseError> {
        self.normals().ok_or(PoseError::MissingNormals)
    }

    /// Applies a rigid transform whose source frame is this cloud's frame.
    pub fn transformed(&self, t: &RigidTransform) -> Result<PointCloud, PoseError> {
        if t.from_frame() != &self.frame {
            return Err(PoseError::Geometry(crate::geometry::GeometryError::FrameMismatch {
                expected: t.from_frame().clone(),
                actual: self.frame.clone(),
            }));
        }
        Ok(PointCloud {
            frame: t.to_frame().clone(),
            points: self.points.iter().map(|p| t.apply(p)).collect(),
            normals: self.normals.as_ref().map(|ns| ns.iter().map(|n| t.apply_vector(n)).collect()),
        })
    }

    /// Keeps the points selected by `keep`, preserving order.
    pub fn select(&self, idx: &[usize]) -> PointCloud {
        PointCloud {
            frame: self.frame.clone(),
            points: idx.iter().map(|&i| self.points[i]).collect(),
            normals: self.normals.as_ref().map(|ns| idx.iter().map(|&i| ns[i]).collect()),
        }
    }

    /// Appends `other`; normals are kept only if both clouds carry them.
    pub fn extend(&mut self, other: &PointCloud) -> Result<(), PoseError> {
        if other.frame != self.frame {
            return Err(PoseError::Geometry(crate::geometry::GeometryError::FrameMismatch {
                expected: self.frame.clone(),
                actual: other.frame.clone(),
            }));
        }
        let had = !self.points.is_empty();
        self.points.extend_from_slice(&other.points);
        self.normals = match (self.normals.take(), &other.normals) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, Some(b)) if !had => Some(b.clone()),
            _ => None,
        };
        Ok(())
    }

    /// Centre and diameter of the axis-aligned bounding box's circumsphere.
    pub fn bounding_sphere(&self) -> Option<(Vector3<f64>, f64)> {
        let first = *self.points.first()?;
        let (lo, hi) = self.points.iter().fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
        Some(((lo + hi) * 0.5, (hi - lo).norm()))
    }
}

/// Per-point normals from [`estimate_normals`]; `None` marks a degenerate neighbourhood.
#[derive(Debug, Clone)]
pub struct NormalEstimate {
    pub frame: Frame,
    pub points: Vec<Vector3<f64>>,
    pub normals: Vec<Option<Vector3<f64>>>,
}

impl NormalEstimate {
    pub fn invalid_count(&self) -> usize {
        self.normals.iter().filter(|n| n.is_none()).count()
    }

    /// Indices of points with a valid normal.
    pub fn valid_indices(&self) -> Vec<usize> {
        self.normals.iter().enumerate().filter(|(_, n)| n.is_some()).map(|(i, _)| i).collect()
    }

    /// The cloud restricted to points with valid normals.
    pub fn valid_cloud(&self) -> PointCloud {
        let (points, normals): (Vec<_>, Vec<_>) = self
            .points
            .iter()
            .zip(&self.normals)
            .filter_map(|(p, n)| n.map(|n| (*p, n)))
            .unzip();
        PointCloud { frame: self.frame.clone(), points, normals: Some(normals) }
    }
}

/// Smallest-eigenvector normals of each point's `k`-neighbourhood covariance,
/// flipped to face `viewpoint(i)`.
pub fn estimate_normals_with<F>(cloud: &PointCloud, k: usize, viewpoint: F) -> Result<NormalEstimate, PoseError>
where
    F: Fn(usize) -> Vector3<f64> + Sync,
{
    if k < 3 {
        return Err(PoseError::InvalidParameter(format!("normal neighbourhood k = {k} < 3")));
    }
    if cloud.len() < k + 1 {
        return Err(PoseError::TooFewPoints { needed: k + 1, found: cloud.len() });
    }
    let tree = KdTree::build(cloud.points());
    let normals = cloud
        .points()
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let nbrs = tree.knn(p, k + 1);
            let n = nbrs.len() as f64;
            let mean = nbrs.iter().fold(Vector3::zeros(), |s, &(j, _)| s + cloud.points[j]) / n;
            let cov = nbrs.iter().fold(Matrix3::zeros(), |s, &(j, _)| {
                let d = cloud.points[j] - mean;
                s + d * d.transpose()
            }) / n;
            let eig = SymmetricEigen::new(cov);
            let mut order = [0usize, 1, 2];
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let (l_mid, l_max) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
            if !(l_max > 0.0) || l_mid <= 1e-10 * l_max {
                return None;
            }
            let mut normal: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned().normalize();
            if normal.dot(&(viewpoint(i) - p)) < 0.0 {
                normal = -normal;
            }
            Some(normal)
        })
        .collect();
    Ok(NormalEstimate { frame: cloud.frame.clone(), points: cloud.points.clone(), normals })
}

/// [`estimate_normals_with`] for a single sensor position.
pub fn estimate_normals(cloud: &PointCloud, k: usize, viewpoint: Vector3<f64>) -> Result<NormalEstimate, PoseError> {
    estimate_normals_with(cloud, k, |_| viewpoint)
}

/// Coarse direction class of a normal: the signed dominant axis (6 classes).
fn normal_class(n: &Vector3<f64>) -> u8 {
    let a = n.iamax();
    (a as u8) * 2 + u8::from(n[a] < 0.0)
}

/// Voxel-grid subsampling. Points sharing a voxel are averaged, separately per
/// normal-direction class when normals are present, so opposite faces of a thin
/// part are not merged. Output order follows the voxel key order.
pub fn voxel_downsample(cloud: &PointCloud, voxel: f64) -> Result<PointCloud, PoseError> {
    if !(voxel > 0.0) {
        return Err(PoseError::InvalidParameter(format!("voxel size {voxel} must be positive")));
    }
    // (voxel, normal class) -> (point sum, normal sum, count)
    type Cell = (Vector3<f64>, Vector3<f64>, usize);
    let mut cells: BTreeMap<(i64, i64, i64, u8), Cell> = BTreeMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        let n = cloud.normals.as_ref().map(|ns| ns[i]);
        let key = (
            (p.x / voxel).floor() as i64,
            (p.y / voxel).floor() as i64,
            (p.z / voxel).floor() as i64,
            n.as_ref().map_or(0, normal_class),
        );
        let e = cells.entry(key).or_insert((Vector3::zeros(), Vector3::zeros(), 0));
        e.0 += p;
        if let Some(n) = n {
            e.1 += n;
        }
        e.2 += 1;
    }
    let mut points = Vec::with_capacity(cells.len());
    let mut normals = Vec::with_capacity(cells.len());
    for (sum_p, sum_n, count) in cells.into_values() {
        if cloud.normals.is_some() {
            let norm = sum_n.norm();
            if norm < 1e-9 {
                continue;
            }
            normals.push(sum_n / norm);
        }
        points.push(sum_p / count as f64);
    }
    Ok(PointCloud {
        frame: cloud.frame.clone(),
        points,
        normals: cloud.normals.as_ref().map(|_| normals),
    })
}

/// Axis-aligned 2D box from an object detector, in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection2D {
    pub camera_id: String,
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
}

impl Detection2D {
    pub fn new(
        camera_id: impl Into<String>,
        u_min: f64,
        v_min: f64,
        u_max: f64,
        v_max: f64,
        k: &CameraIntrinsics,
    ) -> Result<Self, PoseError> {
        let d = Detection2D { camera_id: camera_id.into(), u_min, v_min, u_max, v_max };
        d.validate(k)?;
        Ok(d)
    }

    /// The whole image.
    pub fn full_image(camera_id: impl Into<String>, k: &CameraIntrinsics) -> Self {
        Detection2D {
            camera_id: camera_id.into(),
            u_min: 0.0,
            v_min: 0.0,
            u_max: k.width as f64,
            v_max: k.height as f64,
        }
    }

    pub fn validate(&self, k: &CameraIntrinsics) -> Result<(), PoseError> {
        let ok = self.u_min < self.u_max
            && self.v_min < self.v_max
            && self.u_min >= 0.0
            && self.v_min >= 0.0
            && self.u_max <= k.width as f64
            && self.v_max <= k.height as f64;
        if ok {
            Ok(())
        } else {
            Err(PoseError::InvalidDetection(format!("{self:?}")))
        }
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.u_min && u <= self.u_max && v >= self.v_min && v <= self.v_max
    }
}

/// Indices of WORLD points in front of the camera whose projection lies inside the box.
pub fn crop_indices(
    cloud: &PointCloud,
    det: &Detection2D,
    k: &CameraIntrinsics,
    t_world_cam: &RigidTransform,
) -> Result<Vec<usize>, PoseError> {
    if cloud.frame() != t_world_cam.from_frame() {
        return Err(PoseError::Geometry(crate::geometry::GeometryError::FrameMismatch {
            expected: t_world_cam.from_frame().clone(),
            actual: cloud.frame().clone(),
        }));
    }
    if t_world_cam.to_frame() != &Frame::Camera(det.camera_id.clone()) {
        return Err(PoseError::CameraMismatch(det.camera_id.clone()));
    }
    Ok(cloud
        .points()
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let pc = t_world_cam.apply(p);
            pc.z > 0.0
                && project_coords(k, &pc).map(|px| det.contains(px.u, px.v)).unwrap_or(false)
        })
        .map(|(i, _)| i)
        .collect())
}

pub fn crop_cloud(
    cloud: &PointCloud,
    det: &Detection2D,
    k: &CameraIntrinsics,
    t_world_cam: &RigidTransform,
) -> Result<PointCloud, PoseError> {
    Ok(cloud.select(&crop_indices(cloud, det, k, t_world_cam)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::project_coords;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> PointCloud {
        let pts = (0..400)
            .map(|i| Vector3::new((i % 20) as f64 * 0.01, (i / 20) as f64 * 0.01, 0.0))
            .collect();
        PointCloud::new(Frame::World, pts).unwrap()
    }

    #[test]
    fn rejects_bad_normals() {
        let pts = vec![Vector3::zeros(); 2];
        assert!(PointCloud::with_normals(Frame::World, pts.clone(), vec![Vector3::z(); 1]).is_err());
        assert!(PointCloud::with_normals(Frame::World, pts.clone(), vec![Vector3::z() * 1.1; 2]).is_err());
        assert!(PointCloud::new(Frame::World, vec![Vector3::new(f64::NAN, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn planar_grid_normals_face_sensor() {
        let est = estimate_normals(&grid(), 8, Vector3::new(0.1, 0.1, 1.0)).unwrap();
        assert_eq!(est.invalid_count(), 0);
        for n in est.normals.iter().flatten() {
            assert!((n - Vector3::z()).norm() < 1e-9);
        }
        let est = estimate_normals(&grid(), 8, Vector3::new(0.1, 0.1, -1.0)).unwrap();
        assert!(est.normals.iter().flatten().all(|n| (n + Vector3::z()).norm() < 1e-9));
    }

    #[test]
    fn sphere_normals_are_radial() {
        // Oracle: the outward normal of a sphere at p is p / |p|.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vector3<f64>> = (0..2000)
            .map(|_| {
                let v = Vector3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                v.normalize() * 0.1
            })
            .collect();
        let cloud = PointCloud::new(Frame::World, pts.clone()).unwrap();
        // Orient outward: viewpoint far along each point's own direction.
        let est = estimate_normals_with(&cloud, 10, |i| pts[i] * 100.0).unwrap();
        let good = est
            .normals
            .iter()
            .zip(&pts)
            .filter(|(n, p)| n.is_some_and(|n| n.angle(&p.normalize()) < 10f64.to_radians()))
            .count();
        assert!(good as f64 >= 0.95 * pts.len() as f64, "{good}");
    }

    #[test]
    fn collinear_points_are_flagged() {
        let pts = (0..20).map(|i| Vector3::new(i as f64 * 0.01, 0.0, 0.0)).collect();
        let est = estimate_normals(&PointCloud::new(Frame::World, pts).unwrap(), 5, Vector3::z()).unwrap();
        assert_eq!(est.invalid_count(), 20);
        assert!(est.valid_cloud().is_empty());
    }

    #[test]
    fn normal_estimation_preconditions() {
        assert!(matches!(estimate_normals(&grid(), 2, Vector3::z()), Err(PoseError::InvalidParameter(_))));
        let small = PointCloud::new(Frame::World, vec![Vector3::zeros(); 3]).unwrap();
        assert!(matches!(estimate_normals(&small, 3, Vector3::z()), Err(PoseError::TooFewPoints { .. })));
    }

    #[test]
    fn voxel_downsample_keeps_opposite_faces_apart() {
        let pts = vec![Vector3::new(0.001, 0.001, 0.001), Vector3::new(0.002, 0.001, 0.001)];
        let c = PointCloud::with_normals(Frame::Object, pts, vec![Vector3::z(), -Vector3::z()]).unwrap();
        assert_eq!(voxel_downsample(&c, 0.01).unwrap().len(), 2);
        let d = voxel_downsample(&grid(), 0.05).unwrap();
        assert_eq!(d.len(), 16);
    }

    #[test]
    fn crop_examples() {
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        let t = RigidTransform::identity(Frame::World, Frame::camera("c"));
        let pts = vec![
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(0.1, 0.05, 1.0),
            Vector3::new(0.0, 0.0, -1.0),
            Vector3::new(5.0, 0.0, 1.0),
        ];
        let cloud = PointCloud::new(Frame::World, pts.clone()).unwrap();
        let full = Detection2D::full_image("c", &k);
        assert_eq!(crop_cloud(&cloud, &full, &k, &t).unwrap().points(), &pts[..2]);

        let px = project_coords(&k, &pts[1]).unwrap();
        let tiny = Detection2D::new("c", px.u - 1e-6, px.v - 1e-6, px.u + 1e-6, px.v + 1e-6, &k).unwrap();
        assert_eq!(crop_cloud(&cloud, &tiny, &k, &t).unwrap().points(), &pts[1..2]);

        let other = Detection2D::full_image("d", &k);
        assert!(matches!(crop_cloud(&cloud, &other, &k, &t), Err(PoseError::CameraMismatch(_))));
    }
}
