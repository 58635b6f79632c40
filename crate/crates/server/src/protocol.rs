//! Wire messages. Every message travels as one JSON text frame with a `seq`
//! number and a `type` tag.

use conav::metrics::{EndReason, TrialMetrics};
use conav::modes::NavMode;
use conav::vehicle::{Pose2D, VelocityCommand};
use conav::world::ScenarioSpec;
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        proto: u32,
        /// Scenario name; the server default when absent.
        #[serde(default)]
        scenario: Option<String>,
        #[serde(default)]
        seed: Option<u64>,
    },
    SetMode {
        mode: NavMode,
    },
    SetGoal {
        x: f64,
        y: f64,
    },
    Joystick {
        v_norm: f64,
        omega_norm: f64,
    },
    Start,
    Reset,
}

impl ClientMessage {
    pub const TAGS: [&'static str; 6] = ["hello", "set_mode", "set_goal", "joystick", "start", "reset"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientEnvelope {
    pub seq: u64,
    #[serde(flatten)]
    pub msg: ClientMessage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    ScenarioGeometry {
        name: String,
        spec: ScenarioSpec,
    },
    State {
        t: f64,
        pose: Pose2D,
        cmd: VelocityCommand,
        in_collision: bool,
        theta: f64,
        k: usize,
    },
    Trajectories {
        global: Vec<(f64, f64)>,
        user: Vec<(f64, f64)>,
        blended: Vec<(f64, f64)>,
        predicted: Vec<(f64, f64)>,
    },
    TrialDone {
        trial_id: String,
        end_reason: EndReason,
        metrics: TrialMetrics,
        /// Joystick messages whose axes had to be clamped into [-1, 1].
        clamped_inputs: usize,
    },
    Error {
        code: String,
        text: String,
    },
}

impl ServerMessage {
    pub fn error(code: &str, text: impl Into<String>) -> Self {
        ServerMessage::Error {
            code: code.to_string(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerEnvelope {
    pub seq: u64,
    #[serde(flatten)]
    pub msg: ServerMessage,
}

/// Why a client frame was rejected.
#[derive(Debug, Clone, PartialEq)]
pub enum ParseError {
    Malformed(String),
    UnknownType(String),
}

/// Decode one client frame, telling unknown tags apart from bad payloads.
pub fn parse_client(text: &str) -> Result<ClientEnvelope, ParseError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ParseError::Malformed(e.to_string()))?;
    match value.get("type").and_then(|t| t.as_str()) {
        None => return Err(ParseError::Malformed("missing type tag".into())),
        Some(tag) if !ClientMessage::TAGS.contains(&tag) => return Err(ParseError::UnknownType(tag.to_string())),
        Some(_) => {}
    }
    serde_json::from_value(value).map_err(|e| ParseError::Malformed(e.to_string()))
}
