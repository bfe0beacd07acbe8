//! Versioned little-endian binary persistence of [`ModelDescriptor`].
//!
//! Layout:
//! ```text
//! magic "PPFDESC\0" | version u32 | dist_step f64 | angle_step f64 | diameter f64 | table length u64
//! table length × { key 4×u32 | count u32 | count × { reference u32 | alpha f64 } }   (keys ascending)
//! sampled model: count u64 | count × { x y z nx ny nz : f64 }
//! surface model: count u64 | count × { x y z nx ny nz : f64 }
//! ```

use std::collections::HashMap;
use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::Vector3;

use super::cloud::PointCloud;
use super::ppf::{FeatureKey, ModelDescriptor, ModelEntry};
use super::PoseError;
use crate::geometry::Frame;

pub const MAGIC: &[u8; 8] = b"PPFDESC\0";
pub const VERSION: u32 = 1;

fn write_cloud<W: Write>(w: &mut W, c: &PointCloud) -> io::Result<()> {
    let normals = c.normals().expect("descriptor clouds carry normals");
    w.write_u64::<LittleEndian>(c.len() as u64)?;
    for (p, n) in c.points().iter().zip(normals) {
        for v in p.iter().chain(n.iter()) {
            w.write_f64::<LittleEndian>(*v)?;
        }
    }
    Ok(())
}

fn read_cloud<R: Read>(r: &mut R) -> Result<PointCloud, PoseError> {
    let n = r.read_u64::<LittleEndian>()? as usize;
    let mut pts = Vec::with_capacity(n.min(1 << 24));
    let mut nrm = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        let mut v = [0f64; 6];
        r.read_f64_into::<LittleEndian>(&mut v)?;
        pts.push(Vector3::new(v[0], v[1], v[2]));
        nrm.push(Vector3::new(v[3], v[4], v[5]));
    }
    PointCloud::with_normals(Frame::Object, pts, nrm)
}

pub fn write_descriptor<W: Write>(w: &mut W, d: &ModelDescriptor) -> Result<(), PoseError> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_f64::<LittleEndian>(d.dist_step)?;
    w.write_f64::<LittleEndian>(d.angle_step)?;
    w.write_f64::<LittleEndian>(d.diameter)?;
    w.write_u64::<LittleEndian>(d.table.len() as u64)?;
    let mut keys: Vec<&FeatureKey> = d.table.keys().collect();
    keys.sort();
    for key in keys {
        for k in key {
            w.write_u32::<LittleEndian>(*k)?;
        }
        let entries = &d.table[key];
        w.write_u32::<LittleEndian>(entries.len() as u32)?;
        for e in entries {
            w.write_u32::<LittleEndian>(e.reference)?;
            w.write_f64::<LittleEndian>(e.alpha)?;
        }
    }
    write_cloud(w, &d.sampled_model)?;
    write_cloud(w, &d.surface_model)?;
    Ok(())
}

pub fn read_descriptor<R: Read>(r: &mut R) -> Result<ModelDescriptor, PoseError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(PoseError::DescriptorFormat("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(PoseError::DescriptorFormat(format!("unsupported version {version}")));
    }
    let dist_step = r.read_f64::<LittleEndian>()?;
    let angle_step = r.read_f64::<LittleEndian>()?;
    let diameter = r.read_f64::<LittleEndian>()?;
    let len = r.read_u64::<LittleEndian>()? as usize;
    let mut table = HashMap::with_capacity(len.min(1 << 22));
    for _ in 0..len {
        let mut key = [0u32; 4];
        r.read_u32_into::<LittleEndian>(&mut key)?;
        let count = r.read_u32::<LittleEndian>()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let reference = r.read_u32::<LittleEndian>()?;
            let alpha = r.read_f64::<LittleEndian>()?;
            entries.push(ModelEntry { reference, alpha });
        }
        table.insert(key, entries);
    }
    let sampled_model = read_cloud(r)?;
    let surface_model = read_cloud(r)?;
    let d = ModelDescriptor { dist_step, angle_step, diameter, table, sampled_model, surface_model };
    d.validate()?;
    Ok(d)
}

pub fn save_descriptor(path: &std::path::Path, d: &ModelDescriptor) -> Result<(), PoseError> {
    let mut w = io::BufWriter::new(std::fs::File::create(path)?);
    write_descriptor(&mut w, d)?;
    w.flush()?;
    Ok(())
}

pub fn load_descriptor(path: &std::path::Path) -> Result<ModelDescriptor, PoseError> {
    read_descriptor(&mut io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::build_descriptor;

    #[test]
    fn round_trip_and_corruption() {
        let pts = vec![Vector3::zeros(), Vector3::new(0.1, 0.0, 0.0), Vector3::new(0.0, 0.1, 0.02)];
        let nrm = vec![Vector3::z(), Vector3::y(), Vector3::x()];
        let c = PointCloud::with_normals(Frame::Object, pts, nrm).unwrap();
        let d = build_descriptor(&c, 0.05, std::f64::consts::TAU / 30.0).unwrap();
        let mut buf = Vec::new();
        write_descriptor(&mut buf, &d).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        let back = read_descriptor(&mut buf.as_slice()).unwrap();
        assert_eq!(back.table, d.table);
        assert_eq!(back.sampled_model, d.sampled_model);
        assert_eq!(back.diameter, d.diameter);

        let mut bad = buf.clone();
        bad[8] = 9;
        assert!(matches!(read_descriptor(&mut bad.as_slice()), Err(PoseError::DescriptorFormat(_))));
        assert!(read_descriptor(&mut &buf[..buf.len() - 3]).is_err());
    }
}
