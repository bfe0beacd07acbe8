//! Pinhole camera model, frame-labelled rigid transforms and AR projection.
//!
//! Every transform carries the frame it maps *from* and the frame it maps
//! *to*; composition and point transformation check those labels so a
//! transform chain such as `T_W^C · T_O^W` cannot be assembled backwards.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{lit, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("frame mismatch: expected {expected}, got {actual}")]
    FrameMismatch { expected: Frame, actual: Frame },
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("degenerate depth (|z| = {0})")]
    DegenerateDepth(f64),
    #[error("matrix is not a rotation: {0}")]
    NotARotation(String),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid frame label {0:?}")]
    InvalidFrame(String),
    #[error("camera config line {line}: {reason}")]
    CameraConfig { line: usize, reason: String },
}

/// Coordinate frame label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Frame {
    Object,
    World,
    Camera(String),
}

impl Frame {
    pub fn camera(id: impl Into<String>) -> Self {
        Frame::Camera(id.into())
    }

    pub fn is_camera(&self) -> bool {
        matches!(self, Frame::Camera(_))
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frame::Object => f.write_str("OBJECT"),
            Frame::World => f.write_str("WORLD"),
            Frame::Camera(id) => write!(f, "CAMERA:{id}"),
        }
    }
}

impl FromStr for Frame {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "OBJECT" => Ok(Frame::Object),
            "WORLD" => Ok(Frame::World),
            _ => match s.strip_prefix("CAMERA:") {
                Some(id) if !id.is_empty() && !id.contains(char::is_whitespace) => {
                    Ok(Frame::Camera(id.to_string()))
                }
                _ => Err(GeometryError::InvalidFrame(s.to_string())),
            },
        }
    }
}

impl TryFrom<String> for Frame {
    type Error = GeometryError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Frame> for String {
    fn from(f: Frame) -> String {
        f.to_string()
    }
}

/// Pinhole intrinsics: the matrix `A` with optional skew.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics<T: Scalar> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub skew: T,
    pub width: u32,
    pub height: u32,
}

impl<T: Scalar> CameraIntrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: u32, height: u32) -> Result<Self, GeometryError> {
        Self::with_skew(fx, fy, cx, cy, T::zero(), width, height)
    }

    pub fn with_skew(
        fx: T,
        fy: T,
        cx: T,
        cy: T,
        skew: T,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let k = CameraIntrinsics { fx, fy, cx, cy, skew, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidIntrinsics(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("image size must be positive");
        }
        if !(self.fx > T::zero()) || !(self.fy > T::zero()) {
            return bad("focal lengths must be positive");
        }
        if !self.skew.is_finite() {
            return bad("skew must be finite");
        }
        let w: T = lit(self.width as f64);
        let h: T = lit(self.height as f64);
        if !(self.cx >= T::zero() && self.cx < w) || !(self.cy >= T::zero() && self.cy < h) {
            return bad("principal point outside the image");
        }
        Ok(())
    }

    /// The 3×3 intrinsic matrix.
    pub fn matrix(&self) -> Matrix3<T> {
        Matrix3::new(
            self.fx,
            self.skew,
            self.cx,
            T::zero(),
            self.fy,
            self.cy,
            T::zero(),
            T::zero(),
            T::one(),
        )
    }

    /// Whether a pixel lies inside `[0, width] × [0, height]`.
    pub fn contains(&self, px: &Pixel<T>) -> bool {
        px.u >= T::zero()
            && px.v >= T::zero()
            && px.u <= lit(self.width as f64)
            && px.v <= lit(self.height as f64)
    }

    /// Unnormalized ray direction (camera frame, z = 1) through pixel `(u, v)`.
    pub fn back_project(&self, u: T, v: T) -> Vector3<T> {
        let y = (v - self.cy) / self.fy;
        let x = (u - self.cx - self.skew * y) / self.fx;
        Vector3::new(x, y, T::one())
    }
}

/// Real-valued image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel<T: Scalar> {
    pub u: T,
    pub v: T,
}

impl<T: Scalar> Pixel<T> {
    pub fn new(u: T, v: T) -> Self {
        Pixel { u, v }
    }
}

/// A 3D point tagged with the frame its coordinates are expressed in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point3<T: Scalar> {
    pub coords: Vector3<T>,
    pub frame: Frame,
}

impl<T: Scalar> Point3<T> {
    pub fn new(x: T, y: T, z: T, frame: Frame) -> Self {
        Point3 { coords: Vector3::new(x, y, z), frame }
    }

    pub fn from_vector(coords: Vector3<T>, frame: Frame) -> Self {
        Point3 { coords, frame }
    }

    pub fn x(&self) -> T {
        self.coords.x
    }
    pub fn y(&self) -> T {
        self.coords.y
    }
    pub fn z(&self) -> T {
        self.coords.z
    }
}

/// Rotation + translation mapping coordinates in `from` into `to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform<T: Scalar> {
    rotation: Matrix3<T>,
    translation: Vector3<T>,
    from: Frame,
    to: Frame,
}

/// Largest elementwise deviation of `RᵀR` from the identity, or of `det R` from 1.
pub fn rotation_drift<T: Scalar>(r: &Matrix3<T>) -> T {
    let e = r.transpose() * r - Matrix3::identity();
    let mut drift = e.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    drift = drift.max((r.determinant() - T::one()).abs());
    drift
}

/// Nearest rotation in the Frobenius sense (polar decomposition via SVD).
pub fn nearest_rotation<T: Scalar>(r: &Matrix3<T>) -> Matrix3<T> {
    let svd = r.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut out = u * v_t;
    if out.determinant() < T::zero() {
        let mut u_fix = u;
        let c = -u_fix.column(2);
        u_fix.set_column(2, &c);
        out = u_fix * v_t;
    }
    out
}

impl<T: Scalar> RigidTransform<T> {
    /// Builds a transform, rejecting matrices that are not rotations and
    /// projecting small numerical drift back onto SO(3).
    pub fn new(
        rotation: Matrix3<T>,
        translation: Vector3<T>,
        from: Frame,
        to: Frame,
    ) -> Result<Self, GeometryError> {
        if rotation.iter().chain(translation.iter()).any(|x| !x.is_finite()) {
            return Err(GeometryError::NotARotation("non-finite entry".into()));
        }
        let drift = rotation_drift(&rotation);
        if drift > T::validation_tolerance() {
            return Err(GeometryError::NotARotation(format!(
                "orthonormality/determinant drift {:e}",
                crate::scalar::to_f64(drift)
            )));
        }
        let rotation = if drift > T::renormalize_threshold() {
            nearest_rotation(&rotation)
        } else {
            rotation
        };
        Ok(RigidTransform { rotation, translation, from, to })
    }

    pub fn identity(from: Frame, to: Frame) -> Self {
        RigidTransform { rotation: Matrix3::identity(), translation: Vector3::zeros(), from, to }
    }

    pub fn from_translation(t: Vector3<T>, from: Frame, to: Frame) -> Self {
        RigidTransform { rotation: Matrix3::identity(), translation: t, from, to }
    }

    pub fn from_quaternion(q: &UnitQuaternion<T>, t: Vector3<T>, from: Frame, to: Frame) -> Self {
        RigidTransform { rotation: *q.to_rotation_matrix().matrix(), translation: t, from, to }
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized), plus translation.
    pub fn from_axis_angle(axis: &Vector3<T>, angle: T, t: Vector3<T>, from: Frame, to: Frame) -> Self {
        let q = UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle);
        Self::from_quaternion(&q, t, from, to)
    }

    pub fn rot_z(angle: T, from: Frame, to: Frame) -> Self {
        Self::from_axis_angle(&Vector3::z(), angle, Vector3::zeros(), from, to)
    }

    /// Parses 12 row-major numbers: the 9 rotation entries then the translation.
    pub fn from_row_major(v: &[T], from: Frame, to: Frame) -> Result<Self, GeometryError> {
        if v.len() != 12 {
            return Err(GeometryError::NotARotation(format!("expected 12 numbers, got {}", v.len())));
        }
        let r = Matrix3::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]);
        Self::new(r, Vector3::new(v[9], v[10], v[11]), from, to)
    }

    pub fn to_row_major(&self) -> [T; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)],
            r[(1, 0)], r[(1, 1)], r[(1, 2)],
            r[(2, 0)], r[(2, 1)], r[(2, 2)],
            t.x, t.y, t.z,
        ]
    }

    pub fn rotation(&self) -> &Matrix3<T> {
        &self.rotation
    }
    pub fn translation(&self) -> &Vector3<T> {
        &self.translation
    }
    pub fn from_frame(&self) -> &Frame {
        &self.from
    }
    pub fn to_frame(&self) -> &Frame {
        &self.to
    }

    pub fn quaternion(&self) -> UnitQuaternion<T> {
        UnitQuaternion::from_matrix(&self.rotation)
    }

    /// Same rotation and translation, relabelled frames.
    pub fn relabel(mut self, from: Frame, to: Frame) -> Self {
        self.from = from;
        self.to = to;
        self
    }

    /// `self ∘ other`: maps `other.from` into `self.to`.
    pub fn compose(&self, other: &RigidTransform<T>) -> Result<Self, GeometryError> {
        if self.from != other.to {
            return Err(GeometryError::FrameMismatch {
                expected: self.from.clone(),
                actual: other.to.clone(),
            });
        }
        let mut rotation = self.rotation * other.rotation;
        if rotation_drift(&rotation) > T::renormalize_threshold() {
            rotation = nearest_rotation(&rotation);
        }
        Ok(RigidTransform {
            rotation,
            translation: self.rotation * other.translation + self.translation,
            from: other.from.clone(),
            to: self.to.clone(),
        })
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
            from: self.to.clone(),
            to: self.from.clone(),
        }
    }

    /// Applies the transform to raw coordinates, without frame checks.
    #[inline]
    pub fn apply(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn apply_vector(&self, v: &Vector3<T>) -> Vector3<T> {
        self.rotation * v
    }

    pub fn transform_point(&self, p: &Point3<T>) -> Result<Point3<T>, GeometryError> {
        if p.frame != self.from {
            return Err(GeometryError::FrameMismatch {
                expected: self.from.clone(),
                actual: p.frame.clone(),
            });
        }
        Ok(Point3 { coords: self.apply(&p.coords), frame: self.to.clone() })
    }

    /// Rotation angle (radians) of `selfᵀ · other`'s relative rotation.
    pub fn rotation_angle_to(&self, other: &RigidTransform<T>) -> T {
        let rel = self.rotation.transpose() * other.rotation;
        let c = (rel.trace() - T::one()) / lit(2.0);
        let axis = Vector3::new(
            rel[(2, 1)] - rel[(1, 2)],
            rel[(0, 2)] - rel[(2, 0)],
            rel[(1, 0)] - rel[(0, 1)],
        );
        let s = axis.norm() / lit(2.0);
        s.atan2(c)
    }

    pub fn translation_distance_to(&self, other: &RigidTransform<T>) -> T {
        (self.translation - other.translation).norm()
    }

    /// Position of this transform's source origin expressed in the target frame,
    /// e.g. the camera centre in WORLD for a CAMERA→WORLD transform.
    pub fn origin(&self) -> Vector3<T> {
        self.translation
    }
}

/// `a ∘ b`.
pub fn compose<T: Scalar>(a: &RigidTransform<T>, b: &RigidTransform<T>) -> Result<RigidTransform<T>, GeometryError> {
    a.compose(b)
}

pub fn invert<T: Scalar>(t: &RigidTransform<T>) -> RigidTransform<T> {
    t.inverse()
}

pub fn transform_point<T: Scalar>(t: &RigidTransform<T>, p: &Point3<T>) -> Result<Point3<T>, GeometryError> {
    t.transform_point(p)
}

/// Projects raw camera-frame coordinates. The scale factor of the homogeneous
/// equation equals the depth and is removed by the divide.
#[inline]
pub fn project_coords<T: Scalar>(k: &CameraIntrinsics<T>, p: &Vector3<T>) -> Result<Pixel<T>, GeometryError> {
    let z = p.z;
    if z.abs() < T::min_depth() {
        return Err(GeometryError::DegenerateDepth(crate::scalar::to_f64(z.abs())));
    }
    if z < T::zero() {
        return Err(GeometryError::BehindCamera(crate::scalar::to_f64(z)));
    }
    let xn = p.x / z;
    let yn = p.y / z;
    Ok(Pixel { u: k.fx * xn + k.skew * yn + k.cx, v: k.fy * yn + k.cy })
}

/// Projects a point expressed in a camera frame.
pub fn project<T: Scalar>(k: &CameraIntrinsics<T>, p: &Point3<T>) -> Result<Pixel<T>, GeometryError> {
    if !p.frame.is_camera() {
        return Err(GeometryError::FrameMismatch {
            expected: Frame::Camera("*".into()),
            actual: p.frame.clone(),
        });
    }
    project_coords(k, &p.coords)
}

/// Projects an OBJECT-frame point through `T_W^C · T_O^W` and the intrinsics.
pub fn ar_project<T: Scalar>(
    k: &CameraIntrinsics<T>,
    t_world_cam: &RigidTransform<T>,
    t_obj_world: &RigidTransform<T>,
    p: &Point3<T>,
) -> Result<Pixel<T>, GeometryError> {
    let chain = t_world_cam.compose(t_obj_world)?;
    project(k, &chain.transform_point(p)?)
}

/// One camera: identifier, intrinsics and the static WORLD→CAMERA transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig<T: Scalar> {
    pub id: String,
    pub intrinsics: CameraIntrinsics<T>,
    pub world_to_camera: RigidTransform<T>,
}

impl<T: Scalar> CameraConfig<T> {
    pub fn new(
        id: impl Into<String>,
        intrinsics: CameraIntrinsics<T>,
        world_to_camera: RigidTransform<T>,
    ) -> Result<Self, GeometryError> {
        let id = id.into();
        let frame = Frame::Camera(id.clone());
        if world_to_camera.from_frame() != &Frame::World || world_to_camera.to_frame() != &frame {
            return Err(GeometryError::FrameMismatch {
                expected: frame,
                actual: world_to_camera.to_frame().clone(),
            });
        }
        Ok(CameraConfig { id, intrinsics, world_to_camera })
    }

    pub fn frame(&self) -> Frame {
        Frame::Camera(self.id.clone())
    }

    /// Camera centre in WORLD coordinates.
    pub fn center(&self) -> Vector3<T> {
        self.world_to_camera.inverse().origin()
    }

    pub fn camera_to_world(&self) -> RigidTransform<T> {
        self.world_to_camera.inverse()
    }
}

/// Parses a camera configuration file.
///
/// One record per line: `id fx fy cx cy skew width height` followed by the
/// WORLD→CAMERA transform as 12 row-major numbers (rotation, then translation
/// in meters). Blank lines and `#` comments are ignored.
pub fn parse_camera_config<T: Scalar>(text: &str) -> Result<Vec<CameraConfig<T>>, GeometryError> {
    let mut cams = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| GeometryError::CameraConfig { line: i + 1, reason };
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 20 {
            return Err(err(format!("expected 20 fields, found {}", tok.len())));
        }
        let num = |s: &str| -> Result<T, GeometryError> {
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(lit)
                .ok_or_else(|| err(format!("bad number {s:?}")))
        };
        let int = |s: &str| s.parse::<u32>().map_err(|_| err(format!("bad integer {s:?}")));
        let id = tok[0].to_string();
        if cams.iter().any(|c: &CameraConfig<T>| c.id == id) {
            return Err(err(format!("duplicate camera id {id}")));
        }
        let k = CameraIntrinsics::with_skew(
            num(tok[1])?,
            num(tok[2])?,
            num(tok[3])?,
            num(tok[4])?,
            num(tok[5])?,
            int(tok[6])?,
            int(tok[7])?,
        )
        .map_err(|e| err(e.to_string()))?;
        let vals = tok[8..].iter().map(|s| num(s)).collect::<Result<Vec<T>, _>>()?;
        let t = RigidTransform::from_row_major(&vals, Frame::World, Frame::Camera(id.clone()))
            .map_err(|e| err(e.to_string()))?;
        cams.push(CameraConfig::new(id, k, t).map_err(|e| err(e.to_string()))?);
    }
    Ok(cams)
}

/// Writes cameras in the format read by [`parse_camera_config`].
pub fn format_camera_config<T: Scalar + fmt::LowerExp>(cams: &[CameraConfig<T>]) -> String {
    let mut out = String::from("# id fx fy cx cy skew width height | T_W^C row-major (R, t)\n");
    for c in cams {
        let k = &c.intrinsics;
        out.push_str(&format!(
            "{} {} {} {} {} {} {} {}",
            c.id, k.fx, k.fy, k.cx, k.cy, k.skew, k.width, k.height
        ));
        for v in c.world_to_camera.to_row_major() {
            out.push_str(&format!(" {v:e}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn k() -> CameraIntrinsics<f64> {
        CameraIntrinsics::new(1000.0, 1000.0, 640.0, 360.0, 1280, 720).unwrap()
    }

    fn translate(x: f64, y: f64, z: f64) -> RigidTransform<f64> {
        RigidTransform::from_translation(Vector3::new(x, y, z), Frame::World, Frame::World)
    }

    #[test]
    fn frame_labels_round_trip() {
        for f in [Frame::Object, Frame::World, Frame::camera("c1")] {
            assert_eq!(f.to_string().parse::<Frame>().unwrap(), f);
        }
        assert!("CAMERA:".parse::<Frame>().is_err());
        assert!("".parse::<Frame>().is_err());
    }

    #[test]
    fn compose_identity_and_translations() {
        let t = RigidTransform::from_axis_angle(
            &Vector3::new(1.0, 2.0, 3.0),
            0.3,
            Vector3::new(0.1, 0.2, 0.3),
            Frame::World,
            Frame::World,
        );
        let id = RigidTransform::identity(Frame::World, Frame::World);
        assert_eq!(id.compose(&t).unwrap(), t);
        let c = translate(1.0, 0.0, 0.0).compose(&translate(0.0, 2.0, 0.0)).unwrap();
        assert_eq!(c.translation(), &Vector3::new(1.0, 2.0, 0.0));
    }

    #[test]
    fn compose_quarter_turns() {
        let q = RigidTransform::rot_z(FRAC_PI_2, Frame::World, Frame::World);
        let c = q.compose(&q).unwrap();
        // Oracle: explicit matrix product of two quarter turns.
        let rz = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let expected = rz * rz;
        assert!((c.rotation() - expected).abs().max() < 1e-12);
    }

    #[test]
    fn compose_checks_frames() {
        let a = RigidTransform::<f64>::identity(Frame::World, Frame::camera("c1"));
        let b = RigidTransform::<f64>::identity(Frame::camera("c1"), Frame::World);
        assert!(matches!(a.compose(&a), Err(GeometryError::FrameMismatch { .. })));
        let ab = a.compose(&b).unwrap();
        assert_eq!(ab.from_frame(), &Frame::camera("c1"));
        assert_eq!(ab.to_frame(), &Frame::camera("c1"));
    }

    #[test]
    fn invert_cases() {
        let id = RigidTransform::<f64>::identity(Frame::Object, Frame::World);
        let inv = id.inverse();
        assert_eq!(inv.rotation(), &Matrix3::identity());
        assert_eq!(inv.from_frame(), &Frame::World);
        let t = translate(1.0, 2.0, 3.0).inverse();
        assert_eq!(t.translation(), &Vector3::new(-1.0, -2.0, -3.0));

        let r = RigidTransform::rot_z(30f64.to_radians(), Frame::World, Frame::World)
            .compose(&translate(0.1, 0.0, 0.0))
            .unwrap();
        let e = r.compose(&r.inverse()).unwrap();
        assert!((e.rotation() - Matrix3::identity()).abs().max() < 1e-9);
        assert!(e.translation().norm() < 1e-9);
    }

    #[test]
    fn rejects_non_rotations() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(RigidTransform::new(m, Vector3::zeros(), Frame::World, Frame::World).is_err());
        let s = Matrix3::identity() * 1.01;
        assert!(RigidTransform::new(s, Vector3::zeros(), Frame::World, Frame::World).is_err());
    }

    #[test]
    fn small_drift_is_projected_away() {
        let mut m = *RigidTransform::<f64>::rot_z(0.4, Frame::World, Frame::World).rotation();
        m[(0, 1)] += 5e-8;
        let t = RigidTransform::new(m, Vector3::zeros(), Frame::World, Frame::World).unwrap();
        assert!(rotation_drift(t.rotation()) < 1e-12);
    }

    #[test]
    fn project_examples() {
        let k = k();
        let c = Frame::camera("c");
        let px = project(&k, &Point3::new(0.0, 0.0, 1.0, c.clone())).unwrap();
        assert_eq!((px.u, px.v), (640.0, 360.0));
        let px = project(&k, &Point3::new(0.1, 0.0, 1.0, c.clone())).unwrap();
        assert!((px.u - 740.0).abs() < 1e-12 && (px.v - 360.0).abs() < 1e-12);
        let px = project(&k, &Point3::new(0.1, 0.2, 2.0, c.clone())).unwrap();
        assert!((px.u - 690.0).abs() < 1e-12 && (px.v - 460.0).abs() < 1e-12);
    }

    #[test]
    fn project_errors() {
        let k = k();
        let c = Frame::camera("c");
        assert!(matches!(
            project(&k, &Point3::new(0.0, 0.0, -1.0, c.clone())),
            Err(GeometryError::BehindCamera(_))
        ));
        assert!(matches!(
            project(&k, &Point3::new(0.0, 0.0, 1e-14, c)),
            Err(GeometryError::DegenerateDepth(_))
        ));
        assert!(matches!(
            project(&k, &Point3::new(0.0, 0.0, 1.0, Frame::World)),
            Err(GeometryError::FrameMismatch { .. })
        ));
    }

    #[test]
    fn skew_enters_u_only() {
        let k = CameraIntrinsics::with_skew(1000.0, 1000.0, 640.0, 360.0, 2.0, 1280, 720).unwrap();
        let px: Pixel<f64> = project_coords(&k, &Vector3::new(0.0, 0.5, 1.0)).unwrap();
        assert!((px.u - 641.0).abs() < 1e-12);
        assert!((px.v - 860.0).abs() < 1e-12);
        let ray = k.back_project(px.u, px.v);
        assert!((ray - Vector3::new(0.0, 0.5, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn transform_point_examples() {
        let p = Point3::new(1.0, 0.0, 0.0, Frame::World);
        let id = RigidTransform::<f64>::identity(Frame::World, Frame::World);
        assert_eq!(id.transform_point(&p).unwrap(), p);
        let r = RigidTransform::rot_z(FRAC_PI_2, Frame::World, Frame::World);
        let q = r.transform_point(&p).unwrap();
        assert!((q.coords - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
        let o = Point3::new(1.0, 0.0, 0.0, Frame::Object);
        assert!(r.transform_point(&o).is_err());
    }

    #[test]
    fn ar_project_axis_cases() {
        let k = k();
        let wc = RigidTransform::identity(Frame::World, Frame::camera("c1"));
        let ow = RigidTransform::identity(Frame::Object, Frame::World);
        let px = ar_project(&k, &wc, &ow, &Point3::new(0.0, 0.0, 2.0, Frame::Object)).unwrap();
        assert_eq!((px.u, px.v), (640.0, 360.0));
        let ow = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 1.0), Frame::Object, Frame::World);
        let px = ar_project(&k, &wc, &ow, &Point3::new(0.0, 0.0, 0.0, Frame::Object)).unwrap();
        assert_eq!((px.u, px.v), (640.0, 360.0));
        // Swapped arguments are caught by frame checks.
        assert!(ar_project(&k, &ow, &wc, &Point3::new(0.0, 0.0, 0.0, Frame::Object)).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 10.0, 1.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 1.0, 1.0, 0, 10).is_err());
    }

    #[test]
    fn camera_config_round_trip() {
        let t = RigidTransform::from_axis_angle(
            &Vector3::new(1.0, 0.0, 0.0),
            std::f64::consts::PI,
            Vector3::new(0.0, 0.0, 0.8),
            Frame::World,
            Frame::camera("cam1"),
        );
        let cam = CameraConfig::new("cam1", k(), t).unwrap();
        let text = format_camera_config(std::slice::from_ref(&cam));
        let back = parse_camera_config::<f64>(&text).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].id, "cam1");
        assert!((back[0].center() - cam.center()).norm() < 1e-12);
        assert!(parse_camera_config::<f64>("cam1 1 2 3").is_err());
    }

    #[test]
    fn generic_over_f32() {
        let k = CameraIntrinsics::<f32>::new(1000.0, 1000.0, 640.0, 360.0, 1280, 720).unwrap();
        let px = project(&k, &Point3::new(0.1f32, 0.2, 2.0, Frame::camera("c"))).unwrap();
        assert!((px.u - 690.0).abs() < 1e-3 && (px.v - 460.0).abs() < 1e-3);
        let r = RigidTransform::<f32>::rot_z(0.5, Frame::World, Frame::World);
        let e = r.compose(&r.inverse()).unwrap();
        assert!((e.rotation() - Matrix3::identity()).abs().max() < 1e-6);
    }
}
