use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SimError;
use crate::geometry::Frame;
use crate::ply::{format_ply, parse_ply, PlyData};
use crate::pose::PointCloud;

/// Triangle mesh in OBJECT coordinates (meters), counter-clockwise winding
/// seen from outside.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[u32; 3]>,
}

const MIN_DOUBLE_AREA: f64 = 1e-15;

impl TriangleMesh {
    /// Validates indices and drops zero-area triangles.
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self, SimError> {
        if vertices.iter().any(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(SimError::InvalidMesh("non-finite vertex".into()));
        }
        let n = vertices.len() as u32;
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(SimError::InvalidMesh(format!("triangle {t:?} indexes past {n} vertices")));
        }
        let triangles = triangles
            .into_iter()
            .filter(|t| {
                let [a, b, c] = t.map(|i| vertices[i as usize]);
                (b - a).cross(&(c - a)).norm() > MIN_DOUBLE_AREA
            })
            .collect();
        Ok(TriangleMesh { vertices, triangles })
    }

    pub fn from_ply(text: &str) -> Result<Self, SimError> {
        let d = parse_ply(text)?;
        Self::new(d.vertices, d.triangles)
    }

    pub fn to_ply(&self) -> String {
        format_ply(&PlyData { vertices: self.vertices.clone(), normals: None, triangles: self.triangles.clone() })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }
    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, i: usize) -> [Vector3<f64>; 3] {
        self.triangles[i].map(|k| self.vertices[k as usize])
    }

    pub fn face_normal(&self, i: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle(i);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }

    /// Whether every edge is shared by exactly two triangles with opposite orientation.
    pub fn is_closed(&self) -> bool {
        let mut edges = std::collections::HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                *edges.entry((t[k], t[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        edges.iter().all(|(&(a, b), &c)| c == 1 && edges.get(&(b, a)) == Some(&1))
    }

    /// Area-weighted random surface samples with face normals, roughly one per
    /// `spacing × spacing` patch. Deterministic for a given seed.
    pub fn sample_surface(&self, spacing: f64, seed: u64) -> PointCloud {
        let areas: Vec<f64> = (0..self.triangles.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .collect();
        let total: f64 = areas.iter().sum();
        let count = ((total / (spacing * spacing)).ceil() as usize).max(1);
        let mut cdf = Vec::with_capacity(areas.len());
        let mut acc = 0.0;
        for a in &areas {
            acc += a / total;
            cdf.push(acc);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(count);
        let mut normals = Vec::with_capacity(count);
        for _ in 0..count {
            let x: f64 = rng.random();
            let i = cdf.partition_point(|&c| c < x).min(areas.len() - 1);
            let (mut s, mut t): (f64, f64) = (rng.random(), rng.random());
            if s + t > 1.0 {
                s = 1.0 - s;
                t = 1.0 - t;
            }
            let [a, b, c] = self.triangle(i);
            points.push(a + (b - a) * s + (c - a) * t);
            normals.push(self.face_normal(i));
        }
        PointCloud::with_normals(Frame::Object, points, normals).expect("unit face normals")
    }
}

/// Distance from `p` to triangle `abc` (closest-point construction).
pub fn point_triangle_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (p - (a + ab * v)).norm();
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (p - (a + ac * w)).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + (c - b) * w)).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (p - (a + ab * v + ac * w)).norm()
}

/// Axis-aligned box `[lo, hi]` as a closed 12-triangle mesh.
pub fn box_mesh(lo: Vector3<f64>, hi: Vector3<f64>) -> TriangleMesh {
    let v = (0..8)
        .map(|i| {
            Vector3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            )
        })
        .collect();
    let quads: [[u32; 4]; 6] = [
        [0, 2, 3, 1], // -z
        [4, 5, 7, 6], // +z
        [0, 1, 5, 4], // -y
        [2, 6, 7, 3], // +y
        [0, 4, 6, 2], // -x
        [1, 3, 7, 5], // +x
    ];
    let tris = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
    TriangleMesh::new(v, tris).expect("valid box")
}

/// UV sphere of radius `r` centred at the origin.
pub fn sphere_mesh(r: f64, rings: u32, segments: u32) -> TriangleMesh {
    let mut v = vec![Vector3::new(0.0, 0.0, r)];
    for i in 1..rings {
        let th = std::f64::consts::PI * i as f64 / rings as f64;
        for j in 0..segments {
            let ph = std::f64::consts::TAU * j as f64 / segments as f64;
            v.push(Vector3::new(r * th.sin() * ph.cos(), r * th.sin() * ph.sin(), r * th.cos()));
        }
    }
    v.push(Vector3::new(0.0, 0.0, -r));
    let south = v.len() as u32 - 1;
    let idx = |i: u32, j: u32| 1 + (i - 1) * segments + (j % segments);
    let mut t = Vec::new();
    for j in 0..segments {
        t.push([0, idx(1, j), idx(1, j + 1)]);
        t.push([south, idx(rings - 1, j + 1), idx(rings - 1, j)]);
    }
    for i in 1..rings - 1 {
        for j in 0..segments {
            t.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            t.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriangleMesh::new(v, t).expect("valid sphere")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_is_closed_and_outward() {
        let m = box_mesh(Vector3::repeat(-1.0), Vector3::repeat(1.0));
        assert!(m.is_closed());
        assert!((m.area() - 24.0).abs() < 1e-12);
        for i in 0..m.triangles().len() {
            let [a, b, c] = m.triangle(i);
            let centroid = (a + b + c) / 3.0;
            assert!(m.face_normal(i).dot(&centroid) > 0.0);
        }
    }

    #[test]
    fn sphere_is_closed() {
        let m = sphere_mesh(0.1, 12, 24);
        assert!(m.is_closed());
        for i in 0..m.triangles().len() {
            let [a, b, c] = m.triangle(i);
            assert!(m.face_normal(i).dot(&((a + b + c) / 3.0)) > 0.0);
        }
    }

    #[test]
    fn degenerate_triangles_dropped_and_indices_checked() {
        let v = vec![Vector3::zeros(), Vector3::x(), Vector3::x() * 2.0, Vector3::y()];
        let m = TriangleMesh::new(v.clone(), vec![[0, 1, 2], [0, 1, 3]]).unwrap();
        assert_eq!(m.triangles().len(), 1);
        assert!(TriangleMesh::new(v, vec![[0, 1, 9]]).is_err());
    }

    #[test]
    fn surface_samples_lie_on_mesh() {
        let m = box_mesh(Vector3::zeros(), Vector3::new(0.1, 0.05, 0.02));
        let c = m.sample_surface(0.005, 3);
        assert!(c.len() > 100);
        for p in c.points() {
            let d = (0..m.triangles().len())
                .map(|i| {
                    let [a, b, cc] = m.triangle(i);
                    point_triangle_distance(p, &a, &b, &cc)
                })
                .fold(f64::INFINITY, f64::min);
            assert!(d < 1e-12);
        }
        assert_eq!(c, m.sample_surface(0.005, 3));
    }

    #[test]
    fn ply_round_trip() {
        let m = box_mesh(Vector3::zeros(), Vector3::new(0.1, 0.05, 0.02));
        assert_eq!(TriangleMesh::from_ply(&m.to_ply()).unwrap(), m);
    }
}
