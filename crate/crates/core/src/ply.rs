//! ASCII PLY subset: a vertex element with `x y z` and optional `nx ny nz`
//! float properties, and an optional face element of vertex index lists.
//! Polygons with more than three vertices are fan-triangulated on read.

use std::fmt::Write as _;

use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unsupported PLY: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlyData {
    pub vertices: Vec<Vector3<f64>>,
    pub normals: Option<Vec<Vector3<f64>>>,
    pub triangles: Vec<[u32; 3]>,
}

pub fn parse_ply(text: &str) -> Result<PlyData, PlyError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let syntax = |line: usize, reason: &str| PlyError::Syntax { line, reason: reason.to_string() };

    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(syntax(1, "missing 'ply' magic")),
    }
    let mut n_vertices = 0usize;
    let mut n_faces = 0usize;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut current: Option<&str> = None;
    let mut saw_format = false;
    loop {
        let (ln, line) = lines.next().ok_or_else(|| syntax(0, "unterminated header"))?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", "1.0"] => saw_format = true,
            ["format", other, ..] => return Err(PlyError::Unsupported(format!("format {other}"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", "vertex", n] => {
                n_vertices = n.parse().map_err(|_| syntax(ln, "bad vertex count"))?;
                current = Some("vertex");
            }
            ["element", "face", n] => {
                n_faces = n.parse().map_err(|_| syntax(ln, "bad face count"))?;
                current = Some("face");
            }
            ["element", other, ..] => return Err(PlyError::Unsupported(format!("element {other}"))),
            ["property", "list", _, _, _] if current == Some("face") => {}
            ["property", _, name] if current == Some("vertex") => vertex_props.push(name.to_string()),
            ["end_header"] => break,
            _ => return Err(syntax(ln, &format!("unexpected header line {line:?}"))),
        }
    }
    if !saw_format {
        return Err(syntax(0, "missing format line"));
    }
    let pos = |name: &str| vertex_props.iter().position(|p| p == name);
    let (ix, iy, iz) = match (pos("x"), pos("y"), pos("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(PlyError::Unsupported("vertex element lacks x/y/z".into())),
    };
    let normal_idx = match (pos("nx"), pos("ny"), pos("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };

    let mut data = PlyData::default();
    let mut normals = Vec::new();
    for _ in 0..n_vertices {
        let (ln, line) = lines.next().ok_or_else(|| syntax(0, "missing vertex lines"))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| syntax(ln, "bad vertex value"))?;
        if vals.len() != vertex_props.len() || vals.iter().any(|v| !v.is_finite()) {
            return Err(syntax(ln, "vertex property count mismatch"));
        }
        data.vertices.push(Vector3::new(vals[ix], vals[iy], vals[iz]));
        if let Some((a, b, c)) = normal_idx {
            normals.push(Vector3::new(vals[a], vals[b], vals[c]));
        }
    }
    if normal_idx.is_some() {
        data.normals = Some(normals);
    }
    for _ in 0..n_faces {
        let (ln, line) = lines.next().ok_or_else(|| syntax(0, "missing face lines"))?;
        let vals: Vec<u32> = line
            .split_whitespace()
            .map(|s| s.parse::<u32>())
            .collect::<Result<_, _>>()
            .map_err(|_| syntax(ln, "bad face index"))?;
        let (&count, idx) = vals.split_first().ok_or_else(|| syntax(ln, "empty face"))?;
        if idx.len() != count as usize || count < 3 {
            return Err(syntax(ln, "face index count mismatch"));
        }
        if idx.iter().any(|&i| i as usize >= n_vertices) {
            return Err(syntax(ln, "face index out of range"));
        }
        for k in 1..idx.len() - 1 {
            data.triangles.push([idx[0], idx[k], idx[k + 1]]);
        }
    }
    Ok(data)
}

pub fn format_ply(data: &PlyData) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", data.vertices.len());
    s.push_str("property float x\nproperty float y\nproperty float z\n");
    if data.normals.is_some() {
        s.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    }
    if !data.triangles.is_empty() {
        let _ = writeln!(s, "element face {}", data.triangles.len());
        s.push_str("property list uchar int vertex_indices\n");
    }
    s.push_str("end_header\n");
    for (i, v) in data.vertices.iter().enumerate() {
        let _ = write!(s, "{} {} {}", v.x, v.y, v.z);
        if let Some(ns) = &data.normals {
            let n = ns[i];
            let _ = write!(s, " {} {} {}", n.x, n.y, n.z);
        }
        s.push('\n');
    }
    for t in &data.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}
