//! Start a server in-process and drive one shared-mode trial over the
//! websocket, printing a line per second of sim time.
//!
//! cargo run --release -p conav-server --example scripted_client

use std::time::Duration;

use conav_server::protocol::{ServerEnvelope, ServerMessage};
use conav_server::{router, AppState, ServerConfig};
use futures_util::{SinkExt, StreamExt};
use serde_json::json;
use tokio_tungstenite::tungstenite::Message;

#[tokio::main]
async fn main() {
    let mut cfg = ServerConfig::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios"));
    // ten times real time
    cfg.tick_period = Duration::from_millis(10);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(AppState::new(cfg))).await });

    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
    let (mut tx, mut rx) = ws.split();
    let mut seq = 0;
    let mut send = move |v: serde_json::Value| {
        seq += 1;
        let mut v = v;
        v["seq"] = json!(seq);
        Message::Text(v.to_string().into())
    };

    tx.send(send(json!({"type": "hello", "proto": 1, "seed": 3}))).await.unwrap();
    let mut goal = None;
    while let Some(Ok(Message::Text(t))) = rx.next().await {
        let env: ServerEnvelope = serde_json::from_str(t.as_str()).unwrap();
        match env.msg {
            ServerMessage::ScenarioGeometry { name, spec } if goal.is_none() => {
                println!("scenario {name}: {} obstacles", spec.obstacles.len());
                goal = Some(spec.goal);
                tx.send(send(json!({"type": "set_mode", "mode": "shared"}))).await.unwrap();
                tx.send(send(json!({"type": "set_goal", "x": spec.goal.x, "y": spec.goal.y}))).await.unwrap();
                tx.send(send(json!({"type": "start"}))).await.unwrap();
            }
            ServerMessage::State { t, pose, theta, k, .. } => {
                // lean left for the first two seconds, then let go
                if t < 2.0 {
                    tx.send(send(json!({"type": "joystick", "v_norm": 0.5, "omega_norm": 0.4}))).await.unwrap();
                } else if (t - 2.0).abs() < 1e-9 {
                    tx.send(send(json!({"type": "joystick", "v_norm": 0.0, "omega_norm": 0.0}))).await.unwrap();
                }
                if ((t * 10.0).round() as u64).is_multiple_of(10) {
                    println!("t {t:5.1}  ({:5.2}, {:4.2})  theta {theta:.2}  k {k}", pose.x, pose.y);
                }
            }
            ServerMessage::TrialDone { trial_id, metrics, .. } => {
                println!("trial {trial_id}: {metrics:?}");
                break;
            }
            ServerMessage::Error { code, text } => eprintln!("server error {code}: {text}"),
            _ => {}
        }
    }
}
