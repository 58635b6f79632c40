use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use conav::metrics::TrialRecord;
use conav::modes::NavMode;
use conav::sim::replay_trial;
use conav::world::{GoalPoint, ScenarioSpec};
use conav_server::protocol::{ServerEnvelope, ServerMessage};
use conav_server::{router, AppState, ServerConfig};
use futures_util::{SinkExt, StreamExt};
use http_body_util::BodyExt;
use serde_json::json;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};
use tower::ServiceExt;

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn state(tick_ms: u64, trials: Option<PathBuf>) -> Arc<AppState> {
    let mut cfg = ServerConfig::new(scenarios_dir());
    cfg.tick_period = Duration::from_millis(tick_ms);
    cfg.trials_dir = trials;
    AppState::new(cfg)
}

async fn spawn_server(app: Arc<AppState>) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(app)).await.unwrap() });
    addr
}

async fn connect(addr: SocketAddr) -> Ws {
    connect_async(format!("ws://{addr}/ws")).await.unwrap().0
}

async fn send(ws: &mut Ws, v: serde_json::Value) {
    ws.send(Message::Text(v.to_string().into())).await.unwrap();
}

async fn recv(ws: &mut Ws) -> Option<ServerEnvelope> {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next()).await.expect("server went quiet")?;
        match msg.ok()? {
            Message::Text(t) => return Some(serde_json::from_str(t.as_str()).unwrap()),
            Message::Close(_) => return None,
            _ => {}
        }
    }
}

fn error_code(env: &ServerEnvelope) -> &str {
    match &env.msg {
        ServerMessage::Error { code, .. } => code,
        other => panic!("expected an error, got {other:?}"),
    }
}

async fn get(app: Arc<AppState>, uri: &str) -> (StatusCode, Vec<u8>) {
    let resp = router(app)
        .oneshot(Request::builder().uri(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

#[tokio::test]
async fn hello_gets_scenario_geometry() {
    let addr = spawn_server(state(0, None)).await;
    let mut ws = connect(addr).await;
    send(&mut ws, json!({"seq": 1, "type": "hello", "proto": 1})).await;
    let env = recv(&mut ws).await.unwrap();
    assert_eq!(env.seq, 1);
    let ServerMessage::ScenarioGeometry { name, spec } = env.msg else {
        panic!("expected geometry, got {:?}", env.msg)
    };
    assert_eq!(name, "zigzag25");
    assert_eq!(spec, ScenarioSpec::load(scenarios_dir().join("zigzag25.json")).unwrap());
}

#[tokio::test]
async fn protocol_mismatch_closes_the_connection() {
    let addr = spawn_server(state(0, None)).await;
    let mut ws = connect(addr).await;
    send(&mut ws, json!({"seq": 1, "type": "hello", "proto": 2})).await;
    let env = recv(&mut ws).await.unwrap();
    assert_eq!(error_code(&env), "proto_mismatch");
    assert!(recv(&mut ws).await.is_none());
}

#[tokio::test]
async fn bad_messages_are_answered_and_the_connection_survives() {
    let addr = spawn_server(state(0, None)).await;
    let mut ws = connect(addr).await;
    ws.send(Message::Text("{not json".into())).await.unwrap();
    assert_eq!(error_code(&recv(&mut ws).await.unwrap()), "malformed");
    send(&mut ws, json!({"seq": 1, "type": "teleport", "x": 3})).await;
    assert_eq!(error_code(&recv(&mut ws).await.unwrap()), "unknown_type");
    send(&mut ws, json!({"seq": 2, "type": "start"})).await;
    assert_eq!(error_code(&recv(&mut ws).await.unwrap()), "hello_required");
    send(&mut ws, json!({"seq": 3, "type": "hello", "proto": 1, "scenario": "../etc"})).await;
    assert_eq!(error_code(&recv(&mut ws).await.unwrap()), "unknown_scenario");
    send(&mut ws, json!({"seq": 4, "type": "hello", "proto": 1})).await;
    let env = recv(&mut ws).await.unwrap();
    assert!(matches!(env.msg, ServerMessage::ScenarioGeometry { .. }));
    send(&mut ws, json!({"seq": 4, "type": "reset"})).await;
    assert_eq!(error_code(&recv(&mut ws).await.unwrap()), "bad_seq");
    send(&mut ws, json!({"seq": 5, "type": "set_goal", "x": -4.0, "y": 1.0})).await;
    assert_eq!(error_code(&recv(&mut ws).await.unwrap()), "blocked_goal");
    send(&mut ws, json!({"seq": 6, "type": "joystick", "v_norm": 1, "omega_norm": 0})).await;
    let env = recv(&mut ws).await.unwrap();
    assert_eq!(error_code(&env), "not_running");
    // replies are numbered in order across the whole connection
    assert_eq!(env.seq, 8);
}

#[tokio::test]
async fn start_without_goal_needs_one_in_planner_modes() {
    let addr = spawn_server(state(0, None)).await;
    let mut ws = connect(addr).await;
    send(&mut ws, json!({"seq": 1, "type": "hello", "proto": 1})).await;
    recv(&mut ws).await.unwrap();
    send(&mut ws, json!({"seq": 2, "type": "set_mode", "mode": "autonomous"})).await;
    send(&mut ws, json!({"seq": 3, "type": "start"})).await;
    assert_eq!(error_code(&recv(&mut ws).await.unwrap()), "goal_required");
}

#[tokio::test]
async fn http_endpoints() {
    let app = state(0, None);
    let (status, body) = get(app.clone(), "/scenarios").await;
    assert_eq!(status, StatusCode::OK);
    let names: Vec<String> = serde_json::from_slice(&body).unwrap();
    assert!(names.contains(&"zigzag25".to_string()));

    let (status, body) = get(app.clone(), "/scenarios/zigzag25").await;
    assert_eq!(status, StatusCode::OK);
    let spec: ScenarioSpec = serde_json::from_slice(&body).unwrap();
    assert_eq!(spec.name, "zigzag25");

    assert_eq!(get(app.clone(), "/scenarios/missing").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(app.clone(), "/trials/000001-shared-1").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(app, "/").await.0, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn live_shared_trial_matches_headless_replay() {
    let trials = tempfile::tempdir().unwrap();
    let app = state(2, Some(trials.path().to_path_buf()));
    let addr = spawn_server(app.clone()).await;
    let ws = connect(addr).await;
    let (mut tx, mut rx) = ws.split();

    let spec = ScenarioSpec::load(scenarios_dir().join("zigzag25.json")).unwrap();
    let goal = GoalPoint { x: spec.goal.x, y: spec.goal.y };
    let setup = [
        json!({"seq": 1, "type": "hello", "proto": 1, "seed": 11}),
        json!({"seq": 2, "type": "set_mode", "mode": "shared"}),
        json!({"seq": 3, "type": "set_goal", "x": goal.x, "y": goal.y}),
        json!({"seq": 4, "type": "start"}),
    ];
    for m in setup {
        tx.send(Message::Text(m.to_string().into())).await.unwrap();
    }

    // a scripted operator: nudges with pauses and one out-of-range push
    let operator = tokio::spawn(async move {
        for i in 0..400u64 {
            let phase = i % 40;
            let (v, w) = match phase {
                0..=9 => (0.6, 0.3 * ((i as f64) * 0.2).sin()),
                10 => (0.0, 0.0),
                20..=24 => (1.5, -0.2),
                25 => (0.0, 0.0),
                _ => {
                    // stick at rest: a client sends nothing
                    tokio::time::sleep(Duration::from_millis(3)).await;
                    continue;
                }
            };
            let m = json!({"seq": 10 + i, "type": "joystick", "v_norm": v, "omega_norm": w});
            if tx.send(Message::Text(m.to_string().into())).await.is_err() {
                break;
            }
            tokio::time::sleep(Duration::from_millis(3)).await;
        }
        tx
    });

    let mut last_seq = 0;
    let mut last_t = 0.0;
    let mut states = 0;
    let (trial_id, clamped) = loop {
        let msg = rx.next().await.expect("connection closed early").unwrap();
        let Message::Text(text) = msg else { continue };
        let env: ServerEnvelope = serde_json::from_str(text.as_str()).unwrap();
        assert!(env.seq > last_seq);
        last_seq = env.seq;
        match env.msg {
            ServerMessage::State { t, .. } => {
                assert!(t > last_t);
                last_t = t;
                states += 1;
            }
            ServerMessage::TrialDone { trial_id, clamped_inputs, .. } => break (trial_id, clamped_inputs),
            // the operator can outlive the trial
            ServerMessage::Error { code, .. } if code == "not_running" => {}
            ServerMessage::Error { code, text } => panic!("{code}: {text}"),
            _ => {}
        }
    };
    operator.abort();

    let (status, body) = get(app.clone(), &format!("/trials/{trial_id}")).await;
    assert_eq!(status, StatusCode::OK);
    let live: TrialRecord = serde_json::from_slice(&body).unwrap();
    assert_eq!(live.mode, NavMode::Shared);
    assert_eq!(live.profile, "live");
    assert!(states > 0 && states <= live.samples.len());
    assert!(live.user_log.iter().any(|c| c.active), "operator input never reached the session");
    assert!(clamped > 0);

    let on_disk = TrialRecord::load(trials.path().join(format!("{trial_id}.json"))).unwrap();
    assert_eq!(on_disk, live);

    let scenario = app.scenario("zigzag25").unwrap();
    let headless = replay_trial(scenario, &live, Some(goal), &app.config.sim).unwrap();
    assert_eq!(headless, live);
}
