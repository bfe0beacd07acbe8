//! Cognitive assistance backend for object-specific turbine blade repair.
//!
//! - [`geometry`]: pinhole camera, frame-checked rigid transforms, AR projection
//! - [`pose`]: point pair feature matching and point-to-plane ICP
//! - [`sim`]: synthetic depth cameras, detections and scripted scenarios
//! - [`twin`]: serial-keyed digital twin store with submodel GET/PUT
//! - [`session`]: repair workflow state machine and AR overlay computation
//! - [`evaluation`]: workload, usability and paired-comparison statistics
//!
//! Geometry and statistics are generic over [`Scalar`] (`f32`/`f64`); the
//! aliases below fix the `f64` instantiation used by the rest of the crate.

pub mod evaluation;
pub mod fixtures;
pub mod geometry;
pub mod ply;
pub mod pose;
pub mod scalar;
pub mod session;
pub mod sim;
pub mod spatial;
pub mod twin;

pub use geometry::{Frame, GeometryError};
pub use scalar::Scalar;

pub type CameraIntrinsics = geometry::CameraIntrinsics<f64>;
pub type CameraConfig = geometry::CameraConfig<f64>;
pub type RigidTransform = geometry::RigidTransform<f64>;
pub type Pixel = geometry::Pixel<f64>;
pub type Point3 = geometry::Point3<f64>;

pub type CameraIntrinsicsF32 = geometry::CameraIntrinsics<f32>;
pub type RigidTransformF32 = geometry::RigidTransform<f32>;
pub type PixelF32 = geometry::Pixel<f32>;
pub type Point3F32 = geometry::Point3<f32>;
