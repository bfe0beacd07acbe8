//! The repair session lives on its own thread. HTTP handlers and sensor feeds
//! reach it through a command channel; notifications fan out over a
//! broadcast channel.

use std::sync::mpsc;
use std::time::Instant;

use bladeassist::evaluation::ActionRecord;
use bladeassist::session::{
    AROverlayFrame, DetailKind, Notification, OverlayLayer, Phase, Session, SessionError, SessionView,
};
use bladeassist::sim::SimEvent;
use bladeassist::twin::DocumentationRecord;
use tokio::sync::{broadcast, oneshot};

type Reply<T> = oneshot::Sender<Result<T, SessionError>>;

enum Command {
    Scan(String, Reply<SessionView>),
    Select(String, Reply<SessionView>),
    Layer(OverlayLayer, bool, Reply<Option<AROverlayFrame>>),
    Detail(DetailKind, f64, Reply<bool>),
    Document(DocumentationRecord, Reply<SessionView>),
    Abort(oneshot::Sender<SessionView>),
    View(oneshot::Sender<SessionView>),
    Overlay(oneshot::Sender<Option<AROverlayFrame>>),
    Log(oneshot::Sender<Vec<ActionRecord>>),
    Sensor(SimEvent),
}

/// The session thread has exited.
#[derive(Debug, thiserror::Error)]
#[error("session loop is not running")]
pub struct SessionGone;

#[derive(Debug, thiserror::Error)]
pub enum CallError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Gone(#[from] SessionGone),
}

/// Cloneable handle to the session thread.
#[derive(Clone)]
pub struct SessionHandle {
    tx: mpsc::Sender<Command>,
    events: broadcast::Sender<Notification>,
}

/// Starts the session loop. Session time is seconds since this call.
pub fn spawn(session: Session) -> SessionHandle {
    let (tx, rx) = mpsc::channel();
    let (events, _) = broadcast::channel(256);
    let out = events.clone();
    let start = Instant::now();
    std::thread::Builder::new()
        .name("session".into())
        .spawn(move || {
            let mut s = session;
            for cmd in rx {
                handle(&mut s, cmd, start.elapsed().as_secs_f64());
                for n in s.take_notifications() {
                    let _ = out.send(n);
                }
            }
        })
        .expect("spawn session thread");
    SessionHandle { tx, events }
}

fn handle(s: &mut Session, cmd: Command, now: f64) {
    match cmd {
        Command::Scan(serial, r) => {
            let _ = r.send(s.on_scan(&serial, now).map(|_| s.view()));
        }
        Command::Select(id, r) => {
            let _ = r.send(s.select_defect(&id, now).map(|_| s.view()));
        }
        Command::Layer(layer, enabled, r) => {
            let _ = r.send(s.toggle_layer(layer, enabled));
        }
        Command::Detail(kind, duration, r) => {
            let _ = r.send(s.detail_viewed(kind, now - duration, now));
        }
        Command::Document(record, r) => {
            // Submitting the form ends a repair still in progress.
            let res = if s.phase() == Phase::DefectSelected { s.finish_repair(now).map(|_| ()) } else { Ok(()) };
            let _ = r.send(res.and_then(|_| s.document_repair(record, now)).map(|_| s.view()));
        }
        Command::Abort(r) => {
            s.abort(now);
            let _ = r.send(s.view());
        }
        Command::View(r) => {
            let _ = r.send(s.view());
        }
        Command::Overlay(r) => {
            let _ = r.send(s.overlay().cloned());
        }
        Command::Log(r) => {
            let _ = r.send(s.session_log().to_vec());
        }
        Command::Sensor(ev) => match ev {
            SimEvent::Scan(e) => {
                let _ = s.on_scan(&e.serial, now);
            }
            SimEvent::Hands(h) if h.present => s.on_hands_entered(now),
            SimEvent::Hands(_) => {}
            SimEvent::FrameReady(f) => {
                s.on_hands_cleared(&f.views, now);
            }
        },
    }
}

impl SessionHandle {
    async fn call<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Command) -> Result<T, SessionGone> {
        let (tx, rx) = oneshot::channel();
        self.tx.send(make(tx)).map_err(|_| SessionGone)?;
        rx.await.map_err(|_| SessionGone)
    }

    pub async fn scan(&self, serial: String) -> Result<SessionView, CallError> {
        Ok(self.call(|r| Command::Scan(serial, r)).await??)
    }

    pub async fn select(&self, defect_id: String) -> Result<SessionView, CallError> {
        Ok(self.call(|r| Command::Select(defect_id, r)).await??)
    }

    pub async fn toggle_layer(&self, layer: OverlayLayer, enabled: bool) -> Result<Option<AROverlayFrame>, CallError> {
        Ok(self.call(|r| Command::Layer(layer, enabled, r)).await??)
    }

    /// A detail panel was visible for `duration_s` seconds up to now.
    pub async fn detail_viewed(&self, kind: DetailKind, duration_s: f64) -> Result<bool, CallError> {
        Ok(self.call(|r| Command::Detail(kind, duration_s, r)).await??)
    }

    pub async fn document(&self, record: DocumentationRecord) -> Result<SessionView, CallError> {
        Ok(self.call(|r| Command::Document(record, r)).await??)
    }

    pub async fn abort(&self) -> Result<SessionView, SessionGone> {
        self.call(Command::Abort).await
    }

    pub async fn view(&self) -> Result<SessionView, SessionGone> {
        self.call(Command::View).await
    }

    pub async fn overlay(&self) -> Result<Option<AROverlayFrame>, SessionGone> {
        self.call(Command::Overlay).await
    }

    pub async fn log(&self) -> Result<Vec<ActionRecord>, SessionGone> {
        self.call(Command::Log).await
    }

    /// Delivers a sensor event (scanner, hand sensor, captured frame).
    pub fn sensor(&self, event: SimEvent) -> Result<(), SessionGone> {
        self.tx.send(Command::Sensor(event)).map_err(|_| SessionGone)
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Notification> {
        self.events.subscribe()
    }
}

/// Feeds recorded sensor events to the session at their script times,
/// `speed` times faster than real time.
pub async fn replay(handle: SessionHandle, events: Vec<SimEvent>, speed: f64) -> Result<(), SessionGone> {
    let start = tokio::time::Instant::now();
    for ev in events {
        let at = start + std::time::Duration::from_secs_f64((ev.timestamp() / speed).max(0.0));
        tokio::time::sleep_until(at).await;
        handle.sensor(ev)?;
    }
    Ok(())
}
