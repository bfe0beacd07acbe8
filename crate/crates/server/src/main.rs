use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use bladeassist::geometry::parse_camera_config;
use bladeassist::pose::load_descriptor;
use bladeassist::session::{ModelAsset, ModelRegistry, Session, SessionConfig};
use bladeassist::sim::{parse_scenario, Simulator, TriangleMesh};
use bladeassist::twin::TwinStore;
use bladeassist_server::{replay, router, spawn, AppState};
use clap::Parser;

/// Workstation service: digital twin store, repair session and AR overlay events.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Twin store directory holding `<serial>.twin` files.
    #[arg(long)]
    store: PathBuf,
    /// Camera configuration file.
    #[arg(long)]
    cameras: PathBuf,
    /// Camera whose image the AR overlay is computed for (default: first).
    #[arg(long)]
    ar_camera: Option<String>,
    /// Model mesh as `<model-id>=<file.ply>`; repeatable.
    #[arg(long = "model", value_parser = parse_pair, required = true)]
    models: Vec<(String, PathBuf)>,
    /// Prebuilt descriptor as `<model-id>=<file>`; built from the mesh otherwise.
    #[arg(long = "descriptor", value_parser = parse_pair)]
    descriptors: Vec<(String, PathBuf)>,
    /// Surface sampling used when building a descriptor (meters).
    #[arg(long, default_value_t = 0.002)]
    sample_spacing: f64,
    #[arg(long, default_value_t = 30.0)]
    nearby_radius_mm: f64,
    /// Replay this scenario's simulated sensor events.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Replay speed-up factor.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Directory served for all other paths.
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(String, PathBuf), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected <id>=<path>, got {s:?}"))?;
    Ok((k.to_string(), PathBuf::from(v)))
}

fn load_models(args: &Args) -> anyhow::Result<ModelRegistry> {
    let mut reg = ModelRegistry::new();
    for (id, path) in &args.models {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mesh = TriangleMesh::from_ply(&text).with_context(|| format!("parsing {}", path.display()))?;
        let asset = match args.descriptors.iter().find(|(d, _)| d == id) {
            Some((_, p)) => ModelAsset {
                mesh: Arc::new(mesh),
                descriptor: Arc::new(load_descriptor(p).with_context(|| format!("loading {}", p.display()))?),
            },
            None => ModelAsset::from_mesh(mesh, args.sample_spacing)?,
        };
        reg.insert(id.clone(), asset);
    }
    Ok(reg)
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    if !(args.speed > 0.0) {
        bail!("--speed must be positive");
    }
    let store = Arc::new(TwinStore::open(&args.store).with_context(|| format!("opening {}", args.store.display()))?);
    let cameras = parse_camera_config::<f64>(&std::fs::read_to_string(&args.cameras)?)?;
    let ar_camera = match &args.ar_camera {
        Some(id) => id.clone(),
        None => cameras.first().context("no cameras configured")?.id.clone(),
    };
    if !cameras.iter().any(|c| c.id == ar_camera) {
        bail!("AR camera {ar_camera:?} is not configured");
    }
    let models = Arc::new(load_models(&args)?);
    let mut config = SessionConfig::new(cameras.clone(), ar_camera);
    config.nearby_radius_mm = args.nearby_radius_mm;
    let handle = spawn(Session::new(store.clone(), models.clone(), config));

    if let Some(path) = &args.scenario {
        let script = parse_scenario(&std::fs::read_to_string(path)?)?;
        let mut sim = Simulator::new(cameras);
        for serial in store.list_serials() {
            let asset = store.asset(&serial)?;
            if let Some(m) = models.get(&asset.model_id) {
                sim = sim.with_object(serial, m.mesh.clone());
            }
        }
        let events = sim.run(&script)?;
        eprintln!("replaying {} sensor events from {}", events.len(), path.display());
        tokio::spawn(replay(handle.clone(), events, args.speed));
    }

    let app = router(AppState::new(store, &models, handle), args.static_dir.clone());
    let listener = tokio::net::TcpListener::bind(args.addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app).with_graceful_shutdown(async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}
