//! JSON envelopes exchanged over `/ws`.
//!
//! Every message is `{"v": 1, "type": ..., "seq": ..., "payload": ...}`.
//! `seq` strictly increases per direction on a connection.

use base64::Engine;
use psf_core::sim::{ControllerKind, Obstacle};
use psf_core::{ControlInput, FootprintShape, GridSpec, RobotState};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const WIRE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WireError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unsupported wire version {0}")]
    Version(u32),
    #[error("unknown message type `{0}`")]
    UnknownType(String),
    #[error("invalid `{kind}` payload: {message}")]
    Payload { kind: String, message: String },
}

#[derive(Debug, Deserialize)]
struct RawEnvelope {
    v: u32,
    #[serde(rename = "type")]
    kind: String,
    seq: u64,
    #[serde(default)]
    payload: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalPayload {
    pub x: f64,
    pub y: f64,
    /// Omitted: keep the current goal heading.
    #[serde(default, alias = "θ")]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnPayload {
    pub shape: FootprintShape,
    /// `(x, y, theta)`.
    pub pose: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsPayload {
    #[serde(default, alias = "ρ")]
    pub rho: Option<f64>,
    /// MPC horizon in steps.
    #[serde(default, alias = "N")]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub controller: Option<ControllerKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClientCommand {
    Goal(GoalPayload),
    SpawnObstacle(SpawnPayload),
    Pause,
    Resume,
    SetParams(ParamsPayload),
}

impl ClientCommand {
    /// Checks positions against the grid extent.
    pub fn validate(&self, grid: &GridSpec) -> Result<(), String> {
        let inside = |x: f64, y: f64, what: &str| {
            if x.is_finite() && y.is_finite() && grid.contains([x, y]) {
                Ok(())
            } else {
                let (lo, hi) = grid.extent();
                Err(format!(
                    "{what} ({x}, {y}) outside the grid [{}, {}] x [{}, {}]",
                    lo[0], hi[0], lo[1], hi[1]
                ))
            }
        };
        match self {
            ClientCommand::Goal(g) => {
                inside(g.x, g.y, "goal")?;
                if g.theta.is_some_and(|t| !t.is_finite()) {
                    return Err("goal heading is not finite".into());
                }
                Ok(())
            }
            ClientCommand::SpawnObstacle(s) => {
                inside(s.pose[0], s.pose[1], "obstacle")?;
                if !(s.pose[2].is_finite() && s.velocity.iter().all(|v| v.is_finite())) {
                    return Err("obstacle heading and velocity must be finite".into());
                }
                s.shape.validate().map_err(|e| e.to_string())
            }
            _ => Ok(()),
        }
    }
}

/// Parses a client message into its sequence number and command.
pub fn parse_client(text: &str) -> Result<(u64, ClientCommand), WireError> {
    let env: RawEnvelope = serde_json::from_str(text).map_err(|e| WireError::Malformed(e.to_string()))?;
    if env.v != WIRE_VERSION {
        return Err(WireError::Version(env.v));
    }
    fn payload<T: serde::de::DeserializeOwned>(kind: &str, v: Value) -> Result<T, WireError> {
        serde_json::from_value(v).map_err(|e| WireError::Payload {
            kind: kind.to_string(),
            message: e.to_string(),
        })
    }
    let empty = |v: &Value| v.is_null() || v.as_object().is_some_and(|o| o.is_empty());
    let cmd = match env.kind.as_str() {
        "goal" => ClientCommand::Goal(payload("goal", env.payload)?),
        "spawn_obstacle" => ClientCommand::SpawnObstacle(payload("spawn_obstacle", env.payload)?),
        "set_params" => ClientCommand::SetParams(payload("set_params", env.payload)?),
        "pause" | "resume" if !empty(&env.payload) => {
            return Err(WireError::Payload {
                kind: env.kind,
                message: "takes no payload".into(),
            })
        }
        "pause" => ClientCommand::Pause,
        "resume" => ClientCommand::Resume,
        _ => return Err(WireError::UnknownType(env.kind)),
    };
    Ok((env.seq, cmd))
}

/// Serializes a client message (used by clients and tests).
pub fn client_message(seq: u64, cmd: &ClientCommand) -> String {
    let (kind, payload) = match cmd {
        ClientCommand::Goal(g) => ("goal", serde_json::to_value(g)),
        ClientCommand::SpawnObstacle(s) => ("spawn_obstacle", serde_json::to_value(s)),
        ClientCommand::SetParams(p) => ("set_params", serde_json::to_value(p)),
        ClientCommand::Pause => ("pause", Ok(Value::Object(Default::default()))),
        ClientCommand::Resume => ("resume", Ok(Value::Object(Default::default()))),
    };
    envelope(kind, seq, &payload.expect("payload serializes").to_string())
}

/// Wraps an already-serialized payload.
pub fn envelope(kind: &str, seq: u64, payload_json: &str) -> String {
    format!(r#"{{"v":{WIRE_VERSION},"type":"{kind}","seq":{seq},"payload":{payload_json}}}"#)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePayload {
    pub t: f64,
    pub pose: RobotState,
    pub inputs: ControlInput,
    /// `null` before the first field exists.
    pub h_value: Option<f64>,
    pub slack: f64,
    /// Planned `(x, y, theta)` knots, empty for the one-step filter.
    pub plan: Vec<[f64; 3]>,
    pub obstacles: Vec<Obstacle>,
    pub goal: RobotState,
    pub paused: bool,
    pub controller: ControllerKind,
    pub rho: f64,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSlicePayload {
    pub i_theta: usize,
    pub i_t: usize,
    /// `[nx, ny]`.
    pub dims: [usize; 2],
    pub resolution: f64,
    pub origin: [f64; 2],
    /// Base64 of little-endian f32 values, rows of `nx` from `iy = 0`.
    pub data: String,
}

impl FieldSlicePayload {
    pub fn encode(i_theta: usize, i_t: usize, grid: &GridSpec, values: &[f64]) -> Self {
        let bytes: Vec<u8> = values.iter().flat_map(|v| (*v as f32).to_le_bytes()).collect();
        FieldSlicePayload {
            i_theta,
            i_t,
            dims: [grid.nx, grid.ny],
            resolution: grid.resolution,
            origin: grid.origin,
            data: base64::engine::general_purpose::STANDARD.encode(bytes),
        }
    }

    pub fn decode(&self) -> Result<Vec<f32>, WireError> {
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(&self.data)
            .map_err(|e| WireError::Malformed(e.to_string()))?;
        if bytes.len() != 4 * self.dims[0] * self.dims[1] {
            return Err(WireError::Malformed(format!(
                "{} bytes for a {}x{} slice",
                bytes.len(),
                self.dims[0],
                self.dims[1]
            )));
        }
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Info,
    Warn,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPayload {
    pub level: Level,
    pub text: String,
}

/// A server message as seen by a client.
#[derive(Debug, Clone, PartialEq)]
pub enum ServerMessage {
    State(StatePayload),
    FieldSlice(FieldSlicePayload),
    Event(EventPayload),
}

/// Parses a server message into its sequence number and body.
pub fn parse_server(text: &str) -> Result<(u64, ServerMessage), WireError> {
    let env: RawEnvelope = serde_json::from_str(text).map_err(|e| WireError::Malformed(e.to_string()))?;
    if env.v != WIRE_VERSION {
        return Err(WireError::Version(env.v));
    }
    let bad = |e: serde_json::Error| WireError::Payload {
        kind: env.kind.clone(),
        message: e.to_string(),
    };
    let msg = match env.kind.as_str() {
        "state" => ServerMessage::State(serde_json::from_value(env.payload.clone()).map_err(bad)?),
        "field_slice" => ServerMessage::FieldSlice(serde_json::from_value(env.payload.clone()).map_err(bad)?),
        "event" => ServerMessage::Event(serde_json::from_value(env.payload.clone()).map_err(bad)?),
        _ => return Err(WireError::UnknownType(env.kind)),
    };
    Ok((env.seq, msg))
}
