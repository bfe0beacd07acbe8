use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use bladeassist::evaluation::format_action_log;
use bladeassist::fixtures::write_fixture_dir;
use bladeassist::geometry::parse_camera_config;
use bladeassist::pose::{build_descriptor, save_descriptor};
use bladeassist::session::{HeadlessOperator, ModelAsset, ModelRegistry, Session, SessionConfig};
use bladeassist::sim::{parse_scenario, Simulator, TriangleMesh};
use bladeassist::twin::TwinStore;
use bladeassist_cli::Report;
use clap::{Parser, Subcommand};

/// Fixture generation, descriptor building and headless scenario runs.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Write the blade mesh, camera rig, study scenario and twin store to a directory.
    MakeFixtures { dir: PathBuf },
    /// Build a pose descriptor from a PLY mesh.
    BuildDescriptor {
        mesh: PathBuf,
        out: PathBuf,
        /// Surface sampling spacing (meters).
        #[arg(long, default_value_t = 0.002)]
        spacing: f64,
        /// Distance step as a fraction of the model diameter.
        #[arg(long, default_value_t = 0.05)]
        dist_step_rel: f64,
        #[arg(long, default_value_t = 30)]
        angle_bins: u32,
    },
    /// Play a scenario through a repair session with a scripted operator.
    /// Writes documentation into the store.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
        /// Model mesh as `<model-id>=<file.ply>`; repeatable.
        #[arg(long = "model", value_parser = parse_pair, required = true)]
        models: Vec<(String, PathBuf)>,
        #[arg(long)]
        ar_camera: Option<String>,
        #[arg(long, default_value_t = 0.002)]
        sample_spacing: f64,
        #[arg(long, default_value_t = 30.0)]
        nearby_radius_mm: f64,
        /// Write the action log CSV here.
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

fn parse_pair(s: &str) -> Result<(String, PathBuf), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected <id>=<path>, got {s:?}"))?;
    Ok((k.to_string(), PathBuf::from(v)))
}

fn read_mesh(path: &PathBuf) -> anyhow::Result<TriangleMesh> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    TriangleMesh::from_ply(&text).with_context(|| format!("parsing {}", path.display()))
}

#[allow(clippy::too_many_arguments)]
fn run(
    scenario: PathBuf,
    store: PathBuf,
    cameras: PathBuf,
    models: Vec<(String, PathBuf)>,
    ar_camera: Option<String>,
    sample_spacing: f64,
    nearby_radius_mm: f64,
    log: Option<PathBuf>,
) -> anyhow::Result<Report> {
    let store = Arc::new(TwinStore::open(&store).with_context(|| format!("opening {}", store.display()))?);
    let cams = parse_camera_config::<f64>(&std::fs::read_to_string(&cameras)?)?;
    let ar_camera = match ar_camera {
        Some(id) => id,
        None => cams.first().context("no cameras configured")?.id.clone(),
    };
    let mut registry = ModelRegistry::new();
    for (id, path) in &models {
        registry.insert(id.clone(), ModelAsset::from_mesh(read_mesh(path)?, sample_spacing)?);
    }
    let script = parse_scenario(&std::fs::read_to_string(&scenario)?)?;
    let mut sim = Simulator::new(cams.clone());
    for serial in store.list_serials() {
        if let Some(m) = registry.get(&store.asset(&serial)?.model_id) {
            sim = sim.with_object(serial, m.mesh.clone());
        }
    }
    let events = sim.run(&script)?;

    let mut config = SessionConfig::new(cams, ar_camera);
    config.nearby_radius_mm = nearby_radius_mm;
    let mut session = Session::new(store, Arc::new(registry), config);
    let report = HeadlessOperator::default().run(&mut session, &events);

    let mut r = Report::default();
    r.push("events", events.len());
    r.push("overlays", report.overlays.len());
    r.push("pose_estimations", session.pose_estimations());
    let worst_rot = report.poses.iter().map(|(t, e)| t.rotation_angle_to(e).to_degrees()).fold(0.0, f64::max);
    let worst_trans = report.poses.iter().map(|(t, e)| t.translation_distance_to(e) * 1000.0).fold(0.0, f64::max);
    r.push("worst_rotation_deg", format!("{worst_rot:.3}"));
    r.push("worst_translation_mm", format!("{worst_trans:.3}"));
    r.push("errors", report.errors.len());
    for (i, e) in report.errors.iter().enumerate() {
        r.push(format!("error{}", i + 1), e);
    }
    let csv = format_action_log(session.session_log());
    if let Some(path) = &log {
        std::fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
    }
    if !session.session_log().is_empty() {
        for (k, v) in bladeassist_cli::tct(&csv)?.entries() {
            r.push(k.clone(), v);
        }
    }
    Ok(r)
}

fn main() -> anyhow::Result<()> {
    match Args::parse().cmd {
        Cmd::MakeFixtures { dir } => {
            write_fixture_dir(&dir).with_context(|| format!("writing {}", dir.display()))?;
            println!("fixtures written to {}", dir.display());
        }
        Cmd::BuildDescriptor { mesh, out, spacing, dist_step_rel, angle_bins } => {
            if angle_bins == 0 || !(spacing > 0.0) {
                bail!("--spacing and --angle-bins must be positive");
            }
            let cloud = read_mesh(&mesh)?.sample_surface(spacing, 1);
            let desc = build_descriptor(&cloud, dist_step_rel, std::f64::consts::TAU / angle_bins as f64)?;
            save_descriptor(&out, &desc)?;
            let mut r = Report::default();
            r.push("sampled_points", desc.sampled_model().len());
            r.push("table_entries", desc.table_entries());
            r.push("diameter_m", format!("{:.6}", desc.diameter()));
            r.push("dist_step_m", format!("{:.6}", desc.dist_step()));
            print!("{r}");
        }
        Cmd::Run { scenario, store, cameras, models, ar_camera, sample_spacing, nearby_radius_mm, log } => {
            let r = run(scenario, store, cameras, models, ar_camera, sample_spacing, nearby_radius_mm, log)?;
            print!("{r}");
        }
    }
    Ok(())
}
