//! Built-in fixtures: a procedural turbine blade, the two-camera workstation
//! rig and the three-blade study data set.

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;

use crate::geometry::Frame;
use crate::sim::TriangleMesh;
use crate::{CameraConfig, CameraIntrinsics, RigidTransform};

/// Model id shared by all study blades.
pub const BLADE_MODEL_ID: &str = "hpt-blade-a";
/// Camera whose image the AR overlay is drawn on.
pub const AR_CAMERA_ID: &str = "cam1";
/// Side length of the cubic work volume centred at the WORLD origin (m).
pub const WORK_VOLUME: f64 = 0.4;

const ROOT_LO: [f64; 3] = [-0.018, -0.022, 0.0];
const ROOT_HI: [f64; 3] = [0.082, 0.028, 0.036];
const SPAN: (f64, f64) = (0.034, 0.21);

struct Section {
    z: f64,
    chord: f64,
    twist: f64,
    sweep: f64,
}

fn section(s: f64) -> Section {
    Section {
        z: SPAN.0 + s * (SPAN.1 - SPAN.0),
        chord: 0.07 * (1.0 - 0.25 * s),
        twist: (-5.0 + 38.0 * s).to_radians(),
        sweep: 0.012 * s * s,
    }
}

/// Cambered 4-digit airfoil with a closed trailing edge; loop starts at the
/// leading edge, runs along the upper side and back along the lower side.
fn airfoil_loop(n: usize) -> Vec<(f64, f64)> {
    let xs: Vec<f64> = (0..=n).map(|i| 0.5 * (1.0 - (std::f64::consts::PI * i as f64 / n as f64).cos())).collect();
    let mut pts = vec![(0.0, 0.0)];
    pts.extend(xs[1..n].iter().map(|&x| {
        let (c, t) = airfoil_at(x);
        (x, c + t)
    }));
    pts.push((1.0, airfoil_at(1.0).0));
    pts.extend(xs[1..n].iter().rev().map(|&x| {
        let (c, t) = airfoil_at(x);
        (x, c - t)
    }));
    pts
}

/// Maps chord-normalized profile coordinates at span fraction `s` into the
/// OBJECT frame.
fn place_profile_point(s: f64, x: f64, y: f64) -> Vector3<f64> {
    let sec = section(s);
    let (sn, cs) = sec.twist.sin_cos();
    let (px, py) = ((x - 0.3) * sec.chord, y * sec.chord);
    Vector3::new(cs * px - sn * py + 0.3 * 0.07 + sec.sweep, sn * px + cs * py, sec.z)
}

/// Point on the blade surface at span fraction `s` and chord fraction `x`,
/// on the suction (`upper`) or pressure side.
pub fn blade_surface_point(s: f64, x: f64, upper: bool) -> Vector3<f64> {
    let (c, t) = airfoil_at(x);
    place_profile_point(s, x, if upper { c + t } else { c - t })
}

/// Camber line and half thickness at chord fraction `x`.
fn airfoil_at(x: f64) -> (f64, f64) {
    let (m, p, tc) = (0.06, 0.4, 0.12);
    let camber = if x < p {
        m / (p * p) * (2.0 * p * x - x * x)
    } else {
        m / ((1.0 - p) * (1.0 - p)) * ((1.0 - 2.0 * p) + 2.0 * p * x - x * x)
    };
    let thick = 5.0 * tc * (0.2969 * x.sqrt() - 0.1260 * x - 0.3516 * x * x + 0.2843 * x.powi(3) - 0.1036 * x.powi(4));
    (camber, thick)
}

/// Procedural blade: a twisted, tapered, swept airfoil standing on an
/// off-centre root block. Closed, about 2.5k triangles, no rotational or
/// mirror symmetry.
pub fn blade_mesh() -> TriangleMesh {
    let n = 24;
    let sections = 40;
    let profile = airfoil_loop(n);
    let ring = profile.len();
    let mut verts = Vec::new();
    for k in 0..sections {
        let s = k as f64 / (sections - 1) as f64;
        verts.extend(profile.iter().map(|&(x, y)| place_profile_point(s, x, y)));
    }
    let at = |k: usize, i: usize| (k * ring + i % ring) as u32;
    let mut tris = Vec::new();
    for k in 0..sections - 1 {
        for i in 0..ring {
            tris.push([at(k, i), at(k + 1, i + 1), at(k, i + 1)]);
            tris.push([at(k, i), at(k + 1, i), at(k + 1, i + 1)]);
        }
    }
    // Caps: strips between matching upper and lower stations.
    let upper = |i: usize| i;
    let lower = |i: usize| if i == 0 || i == n { i } else { ring - i };
    for (k, up) in [(0, false), (sections - 1, true)] {
        for i in 0..n {
            let mut quad = vec![[at(k, upper(i)), at(k, upper(i + 1)), at(k, lower(i + 1))]];
            if i > 0 {
                quad.push([at(k, upper(i)), at(k, lower(i + 1)), at(k, lower(i))]);
            }
            if i + 1 == n {
                quad[0] = [at(k, upper(i)), at(k, upper(i + 1)), at(k, lower(i))];
                quad.truncate(1);
            }
            for t in quad {
                let [a, b, c] = t.map(|j| verts[j as usize]);
                let nz = (b - a).cross(&(c - a)).z;
                tris.push(if (nz > 0.0) == up { t } else { [t[0], t[2], t[1]] });
            }
        }
    }
    let root = crate::sim::mesh::box_mesh(Vector3::from(ROOT_LO), Vector3::from(ROOT_HI));
    let base = verts.len() as u32;
    verts.extend_from_slice(root.vertices());
    tris.extend(root.triangles().iter().map(|t| t.map(|i| i + base)));
    TriangleMesh::new(verts, tris).expect("valid blade mesh")
}

/// WORLD→CAMERA transform of a camera at `eye` looking at `target`; image
/// `y` points along `-up`.
pub fn look_at(id: &str, eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> RigidTransform {
    let z = (target - eye).normalize();
    let x = z.cross(&up).normalize();
    let y = z.cross(&x);
    let r = nalgebra::Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    RigidTransform::new(r, -(r * eye), Frame::World, Frame::camera(id)).expect("orthonormal basis")
}

/// Two 1280×720 depth cameras around the work volume: `cam1` above (the AR
/// camera), `cam2` from the front right.
pub fn workstation_cameras() -> Vec<CameraConfig> {
    let k = CameraIntrinsics::new(1000.0, 1000.0, 640.0, 360.0, 1280, 720).expect("valid intrinsics");
    let target = Vector3::zeros();
    vec![
        CameraConfig::new(
            "cam1",
            k,
            look_at("cam1", Vector3::new(0.05, -0.25, 0.85), target, Vector3::new(0.0, 1.0, 0.0)),
        )
        .expect("cam1"),
        CameraConfig::new(
            "cam2",
            k,
            look_at("cam2", Vector3::new(0.7, -0.45, 0.35), target, Vector3::new(0.0, 0.0, 1.0)),
        )
        .expect("cam2"),
    ]
}

/// Uniformly random rotation with the model centre placed uniformly inside
/// the work volume.
pub fn random_pose<R: Rng>(rng: &mut R, mesh: &TriangleMesh) -> RigidTransform {
    let q = loop {
        let v = nalgebra::Vector4::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            break UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(v / n));
        }
    };
    let half = WORK_VOLUME / 2.0;
    let centre = Vector3::new(rng.random_range(-half..half), rng.random_range(-half..half), rng.random_range(-half..half));
    let c = mesh_centre(mesh);
    RigidTransform::from_quaternion(&q, centre - q * c, Frame::Object, Frame::World)
}

/// Centre of the mesh's axis-aligned bounding box.
pub fn mesh_centre(mesh: &TriangleMesh) -> Vector3<f64> {
    let lo = mesh.vertices().iter().fold(Vector3::repeat(f64::INFINITY), |a, v| a.inf(v));
    let hi = mesh.vertices().iter().fold(Vector3::repeat(f64::NEG_INFINITY), |a, v| a.sup(v));
    (lo + hi) / 2.0
}

/// Serial numbers of the three study blades.
pub const STUDY_SERIALS: [&str; 3] = ["TB-4711-0001", "TB-4711-0002", "TB-4711-0003"];

fn surface_polyline(s0: f64, x0: f64, s1: f64, x1: f64, upper: bool, n: usize) -> Vec<[f64; 3]> {
    (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            blade_surface_point(s0 + t * (s1 - s0), x0 + t * (x1 - x0), upper).into()
        })
        .collect()
}

/// Closed boundary of the span/chord rectangle `[s0, s1] × [x0, x1]`.
fn surface_patch(s0: f64, s1: f64, x0: f64, x1: f64, upper: bool) -> Vec<[f64; 3]> {
    let mut b = surface_polyline(s0, x0, s0, x1, upper, 6);
    b.extend(surface_polyline(s0, x1, s1, x1, upper, 6).into_iter().skip(1));
    b.extend(surface_polyline(s1, x1, s1, x0, upper, 6).into_iter().skip(1));
    b.extend(surface_polyline(s1, x0, s0, x0, upper, 6).into_iter().skip(1));
    let first = b[0];
    *b.last_mut().unwrap() = first;
    b
}

fn polyline_length_mm(p: &[[f64; 3]]) -> f64 {
    p.windows(2).map(|w| (Vector3::from(w[1]) - Vector3::from(w[0])).norm()).sum::<f64>() * 1000.0
}

fn study_submodels(defect: usize) -> crate::twin::Submodels {
    use crate::twin::*;
    let zones = vec![
        Zone {
            id: "Z-LE".into(),
            name: "leading edge".into(),
            max_removal_mm: 0.2,
            boundary_m: surface_patch(0.1, 0.95, 0.0, 0.12, true),
        },
        Zone {
            id: "Z-SS".into(),
            name: "suction side airfoil".into(),
            max_removal_mm: 0.4,
            boundary_m: surface_patch(0.1, 0.95, 0.12, 0.85, true),
        },
        Zone {
            id: "Z-PS".into(),
            name: "pressure side airfoil".into(),
            max_removal_mm: 0.35,
            boundary_m: surface_patch(0.1, 0.95, 0.1, 0.85, false),
        },
    ];
    let (id, kind, zone_id, geometry, comment) = match defect {
        0 => (
            "D-01",
            DefectKind::Crack,
            "Z-SS",
            surface_polyline(0.52, 0.3, 0.6, 0.42, true, 4),
            "hairline crack found during FPI",
        ),
        1 => (
            "D-01",
            DefectKind::Erosion,
            "Z-LE",
            surface_polyline(0.62, 0.04, 0.8, 0.05, true, 5),
            "leading edge erosion",
        ),
        _ => ("D-01", DefectKind::Dent, "Z-PS", surface_polyline(0.35, 0.45, 0.38, 0.5, false, 2), "impact dent"),
    };
    let length_mm = (polyline_length_mm(&geometry) * 10.0).round() / 10.0;
    let defects = vec![Defect {
        id: id.into(),
        kind,
        length_mm,
        status: DefectStatus::Open,
        zone_id: zone_id.into(),
        comment: comment.into(),
        geometry_m: geometry,
    }];
    let spots = [
        (0.5, 0.25, true, 1.42),
        (0.6, 0.5, true, 1.35),
        (0.7, 0.06, true, 0.92),
        (0.4, 0.5, false, 1.28),
        (0.3, 0.4, false, 1.51),
        (0.9, 0.3, true, 0.88),
    ];
    let wall_thickness = spots
        .iter()
        .enumerate()
        .map(|(i, &(s, x, up, t))| WallThicknessMeasurement {
            spot_id: format!("W-{:02}", i + 1),
            location_m: blade_surface_point(s, x, up).into(),
            thickness_mm: t,
        })
        .collect();
    Submodels { defects, zones, wall_thickness, documentation: Vec::new() }
}

/// The three study blades, one open defect each.
pub fn study_assets() -> Vec<crate::twin::AssetTwin> {
    STUDY_SERIALS
        .iter()
        .enumerate()
        .map(|(i, s)| crate::twin::AssetTwin::new(*s, BLADE_MODEL_ID, study_submodels(i)))
        .collect()
}

/// Blade lying on its pressure side, rotated by `yaw` about WORLD z and
/// centred at `(x, y)` on the work volume's mid plane.
pub fn placement(mesh: &TriangleMesh, yaw: f64, x: f64, y: f64) -> RigidTransform {
    let lie = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::FRAC_PI_2);
    let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw) * lie;
    let c = mesh_centre(mesh);
    RigidTransform::from_quaternion(&q, Vector3::new(x, y, 0.0) - q * c, Frame::Object, Frame::World)
}

/// Per blade: scan, place, hands out (overlay), hands in (repair starts),
/// hands out (repair done). The headless operator documents 10 s later.
pub fn study_script(mesh: &TriangleMesh) -> crate::sim::ScenarioScript {
    use crate::sim::{ScenarioScript, ScriptAction, ScriptEvent};
    let placements = [(0.3, 0.02, -0.03), (-0.5, -0.06, 0.05), (1.2, 0.08, 0.0)];
    let mut events = Vec::new();
    let mut t0 = 0.0;
    for (serial, &(yaw, x, y)) in STUDY_SERIALS.iter().zip(&placements) {
        let ev = |dt: f64, action| ScriptEvent { time: t0 + dt, action };
        events.push(ev(0.0, ScriptAction::Scan { serial: serial.to_string() }));
        events.push(ev(1.0, ScriptAction::Place { serial: serial.to_string(), pose: placement(mesh, yaw, x, y) }));
        events.push(ev(1.0, ScriptAction::Hands { present: true }));
        events.push(ev(9.0, ScriptAction::Hands { present: false }));
        events.push(ev(14.0, ScriptAction::Hands { present: true }));
        events.push(ev(44.0, ScriptAction::Hands { present: false }));
        t0 += 70.0;
    }
    ScenarioScript { noise_sigma: 0.0005, cameras: vec!["cam1".into(), "cam2".into()], seed: 7, events }
}

/// Spacing of the surface samples the blade descriptor is built from.
pub const MODEL_SAMPLE_SPACING: f64 = 0.002;

/// Dense OBJECT-frame surface samples the descriptor is built from.
pub fn blade_model_cloud(mesh: &TriangleMesh) -> crate::pose::PointCloud {
    mesh.sample_surface(MODEL_SAMPLE_SPACING, 1)
}

/// Registry holding the procedural blade under [`BLADE_MODEL_ID`].
pub fn blade_registry() -> crate::session::ModelRegistry {
    let asset = crate::session::ModelAsset::from_mesh(blade_mesh(), MODEL_SAMPLE_SPACING).expect("blade descriptor");
    [(BLADE_MODEL_ID.to_string(), asset)].into_iter().collect()
}

/// Writes the fixture files: mesh, camera configuration, study scenario and
/// a twin store with the study assets.
pub fn write_fixture_dir(dir: &std::path::Path) -> std::io::Result<()> {
    let mesh = blade_mesh();
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("blade.ply"), mesh.to_ply())?;
    std::fs::write(dir.join("cameras.txt"), crate::geometry::format_camera_config(&workstation_cameras()))?;
    std::fs::write(dir.join("study.scenario"), crate::sim::format_scenario(&study_script(&mesh)))?;
    let store = dir.join("store");
    std::fs::create_dir_all(&store)?;
    for a in study_assets() {
        std::fs::write(store.join(format!("{}.twin", a.serial)), a.document())?;
    }
    Ok(())
}
