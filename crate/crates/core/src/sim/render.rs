//! Synthetic depth camera: ray casting against a triangle mesh, Gaussian
//! noise and a bounding-box "detector".

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::mesh::TriangleMesh;
use super::SimError;
use crate::geometry::{project_coords, Frame};
use crate::pose::{Detection2D, PointCloud};
use crate::{CameraConfig, RigidTransform};

const RAY_EPS: f64 = 1e-12;
const TILE: usize = 16;

/// Möller–Trumbore ray/triangle test; returns the ray parameter of the hit.
#[inline]
pub fn ray_triangle(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    v0: &Vector3<f64>,
    v1: &Vector3<f64>,
    v2: &Vector3<f64>,
) -> Option<f64> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < RAY_EPS {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - v0;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > RAY_EPS).then_some(t)
}

fn check_object_pose(t_obj_world: &RigidTransform) -> Result<(), SimError> {
    if t_obj_world.from_frame() != &Frame::Object || t_obj_world.to_frame() != &Frame::World {
        return Err(SimError::Geometry(crate::GeometryError::FrameMismatch {
            expected: Frame::Object,
            actual: t_obj_world.from_frame().clone(),
        }));
    }
    Ok(())
}

/// Casts one ray per `pixel_stride`-th pixel and returns the first hits as a
/// WORLD-frame cloud. Pixels whose ray misses the mesh produce no point.
pub fn render_cloud(
    mesh: &TriangleMesh,
    t_obj_world: &RigidTransform,
    camera: &CameraConfig,
    pixel_stride: usize,
) -> Result<PointCloud, SimError> {
    if pixel_stride == 0 {
        return Err(SimError::InvalidParameter("pixel stride must be at least 1".into()));
    }
    check_object_pose(t_obj_world)?;
    let k = &camera.intrinsics;
    let obj_to_cam = camera.world_to_camera.compose(t_obj_world)?;
    let verts: Vec<Vector3<f64>> = mesh.vertices().iter().map(|v| obj_to_cam.apply(v)).collect();

    // Screen-space binning of triangles into tiles.
    let (w, h) = (k.width as usize, k.height as usize);
    let (tx, ty) = (w.div_ceil(TILE), h.div_ceil(TILE));
    let mut tiles: Vec<Vec<u32>> = vec![Vec::new(); tx * ty];
    for (ti, tri) in mesh.triangles().iter().enumerate() {
        let cv = tri.map(|i| verts[i as usize]);
        let in_front = cv.iter().filter(|p| p.z > RAY_EPS).count();
        if in_front == 0 {
            continue;
        }
        let (x0, x1, y0, y1) = if in_front == 3 {
            let px = cv.map(|p| project_coords(k, &p).expect("in front"));
            let umin = px.iter().map(|p| p.u).fold(f64::INFINITY, f64::min);
            let umax = px.iter().map(|p| p.u).fold(f64::NEG_INFINITY, f64::max);
            let vmin = px.iter().map(|p| p.v).fold(f64::INFINITY, f64::min);
            let vmax = px.iter().map(|p| p.v).fold(f64::NEG_INFINITY, f64::max);
            if umax < 0.0 || vmax < 0.0 || umin > w as f64 || vmin > h as f64 {
                continue;
            }
            let c = |x: f64, n: usize| ((x.max(0.0) as usize) / TILE).min(n - 1);
            (c(umin.floor(), tx), c(umax.ceil(), tx), c(vmin.floor(), ty), c(vmax.ceil(), ty))
        } else {
            (0, tx - 1, 0, ty - 1)
        };
        for y in y0..=y1 {
            for x in x0..=x1 {
                tiles[y * tx + x].push(ti as u32);
            }
        }
    }

    let cam_to_world = camera.camera_to_world();
    let rows: Vec<usize> = (0..h).step_by(pixel_stride).collect();
    let points: Vec<Vector3<f64>> = rows
        .par_iter()
        .flat_map_iter(|&v| {
            let tiles = &tiles;
            let verts = &verts;
            let cam_to_world = &cam_to_world;
            (0..w).step_by(pixel_stride).filter_map(move |u| {
                let cell = &tiles[(v / TILE) * tx + u / TILE];
                if cell.is_empty() {
                    return None;
                }
                let dir = k.back_project(u as f64, v as f64);
                let origin = Vector3::zeros();
                let mut best = f64::INFINITY;
                for &ti in cell {
                    let [a, b, c] = mesh.triangles()[ti as usize].map(|i| verts[i as usize]);
                    if let Some(t) = ray_triangle(&origin, &dir, &a, &b, &c) {
                        best = best.min(t);
                    }
                }
                best.is_finite().then(|| cam_to_world.apply(&(dir * best)))
            })
        })
        .collect();
    Ok(PointCloud::new(Frame::World, points)?)
}

/// Adds i.i.d. zero-mean Gaussian noise of standard deviation `sigma` to every
/// coordinate. Deterministic for a given seed; normals are left untouched.
pub fn add_noise(cloud: &PointCloud, sigma: f64, seed: u64) -> Result<PointCloud, SimError> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(SimError::InvalidParameter(format!("noise sigma {sigma} must be non-negative")));
    }
    if sigma == 0.0 {
        return Ok(cloud.clone());
    }
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<Vector3<f64>> = cloud
        .points()
        .iter()
        .map(|p| p + Vector3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)))
        .collect();
    let mut out = PointCloud::new(cloud.frame().clone(), pts)?;
    if let Some(ns) = cloud.normals() {
        out.set_normals(ns.to_vec())?;
    }
    Ok(out)
}

/// Bounding box of the projected in-front mesh vertices, grown by `margin_px`
/// and clamped to the image.
pub fn synth_detection(
    mesh: &TriangleMesh,
    t_obj_world: &RigidTransform,
    camera: &CameraConfig,
    margin_px: f64,
) -> Result<Detection2D, SimError> {
    check_object_pose(t_obj_world)?;
    let k = &camera.intrinsics;
    let obj_to_cam = camera.world_to_camera.compose(t_obj_world)?;
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for v in mesh.vertices() {
        let pc = obj_to_cam.apply(v);
        if pc.z <= 0.0 {
            continue;
        }
        if let Ok(px) = project_coords(k, &pc) {
            lo = (lo.0.min(px.u), lo.1.min(px.v));
            hi = (hi.0.max(px.u), hi.1.max(px.v));
        }
    }
    let (w, h) = (k.width as f64, k.height as f64);
    if !lo.0.is_finite() || hi.0 < 0.0 || hi.1 < 0.0 || lo.0 > w || lo.1 > h {
        return Err(SimError::NoDetection(camera.id.clone()));
    }
    let det = Detection2D {
        camera_id: camera.id.clone(),
        u_min: (lo.0 - margin_px).max(0.0),
        v_min: (lo.1 - margin_px).max(0.0),
        u_max: (hi.0 + margin_px).min(w),
        v_max: (hi.1 + margin_px).min(h),
    };
    det.validate(k).map_err(|_| SimError::NoDetection(camera.id.clone()))?;
    Ok(det)
}
