//! Realtime session service for the conav simulator.
//!
//! One websocket connection at `/ws` runs one live trial at a time. The
//! joystick, goal and mode arrive as JSON messages; the server streams the
//! state at the tick rate and a metrics summary when the trial ends. Finished
//! trials are also available over plain HTTP.

pub mod protocol;
pub mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use conav::metrics::TrialRecord;
use conav::sim::SimConfig;
use conav::world::{Scenario, ScenarioSpec};
use futures_util::{SinkExt, StreamExt};
use tokio::sync::mpsc;
use tower_http::services::ServeDir;

use crate::protocol::ServerEnvelope;
use crate::session::{Connection, Flow, Outgoing};

/// Scenario served when a hello names none.
pub const DEFAULT_SCENARIO: &str = "zigzag25";

/// Outgoing frames buffered per connection before state frames are dropped.
const OUTBOX: usize = 64;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub scenarios_dir: PathBuf,
    /// Browser bundle served at `/`.
    pub ui_dir: Option<PathBuf>,
    /// Finished trials are written here as `<id>.json`.
    pub trials_dir: Option<PathBuf>,
    pub sim: SimConfig,
    /// Wall-clock time per tick; zero runs as fast as possible.
    pub tick_period: Duration,
}

impl ServerConfig {
    pub fn new(scenarios_dir: impl Into<PathBuf>) -> Self {
        let sim = SimConfig::default();
        let tick_period = Duration::from_secs_f64(sim.params.dt);
        Self {
            scenarios_dir: scenarios_dir.into(),
            ui_dir: None,
            trials_dir: None,
            sim,
            tick_period,
        }
    }
}

pub struct AppState {
    pub config: ServerConfig,
    scenarios: Mutex<HashMap<String, Arc<Scenario>>>,
    trials: Mutex<HashMap<String, TrialRecord>>,
    next_trial: AtomicU64,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl AppState {
    pub fn new(config: ServerConfig) -> Arc<Self> {
        Arc::new(Self {
            config,
            scenarios: Mutex::new(HashMap::new()),
            trials: Mutex::new(HashMap::new()),
            next_trial: AtomicU64::new(1),
        })
    }

    /// Names of the scenario documents on disk, sorted.
    pub fn scenario_names(&self) -> Vec<String> {
        let mut names: Vec<String> = std::fs::read_dir(&self.config.scenarios_dir)
            .into_iter()
            .flatten()
            .flatten()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .filter_map(|p| p.file_stem().and_then(|s| s.to_str()).map(str::to_string))
            .filter(|n| valid_name(n))
            .collect();
        names.sort();
        names
    }

    pub fn default_scenario(&self) -> Option<String> {
        let names = self.scenario_names();
        if names.iter().any(|n| n == DEFAULT_SCENARIO) {
            Some(DEFAULT_SCENARIO.to_string())
        } else {
            names.into_iter().next()
        }
    }

    pub fn scenario_spec(&self, name: &str) -> Result<ScenarioSpec, String> {
        if !valid_name(name) {
            return Err(format!("invalid scenario name '{name}'"));
        }
        let path = self.config.scenarios_dir.join(format!("{name}.json"));
        ScenarioSpec::load(&path).map_err(|e| format!("scenario '{name}': {e}"))
    }

    /// The built scenario, cached after the first load.
    pub fn scenario(&self, name: &str) -> Result<Arc<Scenario>, String> {
        if let Some(s) = self.scenarios.lock().expect("scenario cache poisoned").get(name) {
            return Ok(Arc::clone(s));
        }
        let spec = self.scenario_spec(name)?;
        let built = Arc::new(
            self.config
                .sim
                .build_scenario(&spec)
                .map_err(|e| format!("scenario '{name}': {e}"))?,
        );
        self.scenarios
            .lock()
            .expect("scenario cache poisoned")
            .insert(name.to_string(), Arc::clone(&built));
        Ok(built)
    }

    /// Keep a finished trial and return its id.
    pub fn store_trial(&self, record: TrialRecord) -> String {
        let n = self.next_trial.fetch_add(1, Ordering::Relaxed);
        let id = format!("{n:06}-{}-{}", record.mode, record.seed);
        if let Some(dir) = &self.config.trials_dir {
            if let Err(e) = write_atomic(dir, &id, &record) {
                tracing::error!(%id, "could not write trial file: {e}");
            }
        }
        self.trials.lock().expect("trial store poisoned").insert(id.clone(), record);
        id
    }

    pub fn trial(&self, id: &str) -> Option<TrialRecord> {
        if let Some(r) = self.trials.lock().expect("trial store poisoned").get(id) {
            return Some(r.clone());
        }
        let dir = self.config.trials_dir.as_ref()?;
        if !valid_name(id) {
            return None;
        }
        TrialRecord::load(dir.join(format!("{id}.json"))).ok()
    }
}

fn write_atomic(dir: &Path, id: &str, record: &TrialRecord) -> conav::Result<()> {
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{id}.json.tmp"));
    std::fs::write(&tmp, record.to_json()?)?;
    std::fs::rename(&tmp, dir.join(format!("{id}.json")))?;
    Ok(())
}

pub fn router(state: Arc<AppState>) -> Router {
    let app = Router::new()
        .route("/ws", get(ws_upgrade))
        .route("/scenarios", get(list_scenarios))
        .route("/scenarios/{name}", get(get_scenario))
        .route("/trials/{id}", get(get_trial));
    let app = match &state.config.ui_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(no_ui)),
    };
    app.with_state(state)
}

/// Bind and serve until the process is stopped.
pub async fn serve(addr: SocketAddr, config: ServerConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config))).await
}

async fn no_ui() -> Html<&'static str> {
    Html("<!doctype html><title>conav</title><p>conav server is running. Connect a client to <code>/ws</code>.</p>")
}

async fn list_scenarios(State(app): State<Arc<AppState>>) -> Json<Vec<String>> {
    Json(app.scenario_names())
}

async fn get_scenario(State(app): State<Arc<AppState>>, UrlPath(name): UrlPath<String>) -> Response {
    match app.scenario_spec(&name) {
        Ok(spec) => Json(spec).into_response(),
        Err(e) => (StatusCode::NOT_FOUND, e).into_response(),
    }
}

async fn get_trial(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    match app.trial(&id) {
        Some(rec) => Json(rec).into_response(),
        None => (StatusCode::NOT_FOUND, format!("no trial '{id}'")).into_response(),
    }
}

async fn ws_upgrade(State(app): State<Arc<AppState>>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| handle_socket(socket, app))
}

async fn handle_socket(socket: WebSocket, app: Arc<AppState>) {
    let (mut sink, mut stream) = socket.split();
    let (out_tx, mut out_rx) = mpsc::channel::<Outgoing>(OUTBOX);

    let writer = tokio::spawn(async move {
        let mut seq = 0u64;
        while let Some(o) = out_rx.recv().await {
            seq += 1;
            let text = match serde_json::to_string(&ServerEnvelope { seq, msg: o.msg }) {
                Ok(t) => t,
                Err(e) => {
                    tracing::error!("could not encode message: {e}");
                    continue;
                }
            };
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
            if o.close {
                let _ = sink.send(Message::Close(None)).await;
                break;
            }
        }
    });

    let mut conn = Connection::new(app, out_tx);
    while let Some(Ok(msg)) = stream.next().await {
        let flow = match msg {
            Message::Text(t) => conn.handle_text(t.as_str()).await,
            Message::Binary(_) => conn.handle_text("").await,
            Message::Close(_) => Flow::Close,
            _ => Flow::Continue,
        };
        if flow == Flow::Close {
            break;
        }
    }
    // joining the trial thread blocks
    let _ = tokio::task::spawn_blocking(move || conn.shutdown()).await;
    let _ = writer.await;
}
