//! Newline-delimited JSON wire protocol and the connection watchdog.
//!
//! Every message is one JSON object on one line:
//!
//! ```text
//! {"type":"heartbeat","seq":7,"stamp":12.5,"body":{"controller_id":"left"}}
//! ```
//!
//! `seq` increases strictly per sender and message type. `stamp` is the
//! sender's clock in seconds and is never used for ordering.

use std::collections::HashMap;
use std::fmt;

use serde::ser::{SerializeStruct, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::se3::{NotUnitQuaternion, Pose, QuatComponents, UnitQuat, Vec3};
use crate::side::Side;

pub const DEFAULT_TCP_PORT: u16 = 10710;
pub const DEFAULT_WS_PORT: u16 = 10711;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MessageType {
    Pose,
    Buttons,
    Heartbeat,
    EeState,
    Marker,
    Gripper,
    Status,
}

impl MessageType {
    pub const ALL: [MessageType; 7] = [
        MessageType::Pose,
        MessageType::Buttons,
        MessageType::Heartbeat,
        MessageType::EeState,
        MessageType::Marker,
        MessageType::Gripper,
        MessageType::Status,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MessageType::Pose => "pose",
            MessageType::Buttons => "buttons",
            MessageType::Heartbeat => "heartbeat",
            MessageType::EeState => "ee_state",
            MessageType::Marker => "marker",
            MessageType::Gripper => "gripper",
            MessageType::Status => "status",
        }
    }

    pub fn parse(s: &str) -> Option<MessageType> {
        MessageType::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllerPoseMsg {
    pub controller_id: String,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerButtonsMsg {
    pub controller_id: String,
    pub upper: bool,
    pub lower: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeartbeatMsg {
    pub controller_id: String,
}

/// Body of `ee_state` and `marker` messages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmPoseMsg {
    pub arm_id: Side,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GripperMsg {
    pub arm_id: Side,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LinkState {
    Connected,
    Disconnected,
}

impl fmt::Display for LinkState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkState::Connected => "CONNECTED",
            LinkState::Disconnected => "DISCONNECTED",
        })
    }
}

/// Watchdog view of one controller. `last_seen` is `None` until the first message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionStatus {
    pub controller_id: String,
    pub state: LinkState,
    pub last_seen: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Pose(ControllerPoseMsg),
    Buttons(ControllerButtonsMsg),
    Heartbeat(HeartbeatMsg),
    EeState(ArmPoseMsg),
    Marker(ArmPoseMsg),
    Gripper(GripperMsg),
    Status(ConnectionStatus),
}

impl Body {
    pub fn message_type(&self) -> MessageType {
        match self {
            Body::Pose(_) => MessageType::Pose,
            Body::Buttons(_) => MessageType::Buttons,
            Body::Heartbeat(_) => MessageType::Heartbeat,
            Body::EeState(_) => MessageType::EeState,
            Body::Marker(_) => MessageType::Marker,
            Body::Gripper(_) => MessageType::Gripper,
            Body::Status(_) => MessageType::Status,
        }
    }

    /// Controller id for controller-originated messages.
    pub fn controller_id(&self) -> Option<&str> {
        match self {
            Body::Pose(m) => Some(&m.controller_id),
            Body::Buttons(m) => Some(&m.controller_id),
            Body::Heartbeat(m) => Some(&m.controller_id),
            _ => None,
        }
    }

    pub fn arm_id(&self) -> Option<Side> {
        match self {
            Body::EeState(m) | Body::Marker(m) => Some(m.arm_id),
            Body::Gripper(m) => Some(m.arm_id),
            _ => None,
        }
    }
}

impl Serialize for Body {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Body::Pose(m) => m.serialize(serializer),
            Body::Buttons(m) => m.serialize(serializer),
            Body::Heartbeat(m) => m.serialize(serializer),
            Body::EeState(m) | Body::Marker(m) => m.serialize(serializer),
            Body::Gripper(m) => m.serialize(serializer),
            Body::Status(m) => m.serialize(serializer),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub seq: u64,
    pub stamp: f64,
    pub body: Body,
}

impl WireMessage {
    pub fn new(seq: u64, stamp: f64, body: Body) -> Self {
        Self { seq, stamp, body }
    }

    pub fn message_type(&self) -> MessageType {
        self.body.message_type()
    }
}

impl Serialize for WireMessage {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("WireMessage", 4)?;
        s.serialize_field("type", self.message_type().as_str())?;
        s.serialize_field("seq", &self.seq)?;
        s.serialize_field("stamp", &self.stamp)?;
        s.serialize_field("body", &self.body)?;
        s.end()
    }
}

/// Encodes one message as a single NDJSON line, including the trailing `\n`.
pub fn encode(msg: &WireMessage) -> String {
    // Serialization of these types cannot fail: no maps with non-string keys
    // and every float is finite by construction.
    let mut line = serde_json::to_string(msg).expect("wire message serializes");
    line.push('\n');
    line
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    #[error("malformed message: {0}")]
    MalformedJson(String),
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("invalid quaternion: {0}")]
    InvalidQuaternion(#[from] NotUnitQuaternion),
    #[error("non-monotonic seq for {msg_type}: {seq} after {last}")]
    NonMonotonicSeq {
        msg_type: MessageType,
        seq: u64,
        last: u64,
    },
}

#[derive(Deserialize)]
struct RawPose {
    position: Vec3,
    orientation: QuatComponents,
}

impl RawPose {
    fn validate(self) -> Result<Pose, DecodeError> {
        if !self.position.is_finite() {
            return Err(DecodeError::MalformedJson("non-finite position".into()));
        }
        Ok(Pose::new(self.position, UnitQuat::from_near_unit(self.orientation)?))
    }
}

#[derive(Deserialize)]
struct RawControllerPose {
    controller_id: String,
    pose: RawPose,
}

#[derive(Deserialize)]
struct RawArmPose {
    arm_id: Side,
    pose: RawPose,
}

fn body_from<T: serde::de::DeserializeOwned>(value: Value) -> Result<T, DecodeError> {
    serde_json::from_value(value).map_err(|e| DecodeError::MalformedJson(format!("body: {e}")))
}

/// Parses and validates one line. Sequence monotonicity needs per-stream
/// state and is checked by [`StreamDecoder`].
pub fn decode(line: &str) -> Result<WireMessage, DecodeError> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    let value: Value =
        serde_json::from_str(line).map_err(|e| DecodeError::MalformedJson(e.to_string()))?;
    let Value::Object(mut obj) = value else {
        return Err(DecodeError::MalformedJson("expected a JSON object".into()));
    };
    let type_name = match obj.get("type") {
        Some(Value::String(s)) => s.clone(),
        _ => return Err(DecodeError::MalformedJson("missing string field `type`".into())),
    };
    let Some(msg_type) = MessageType::parse(&type_name) else {
        return Err(DecodeError::UnknownType(type_name));
    };
    let seq = obj
        .get("seq")
        .and_then(Value::as_u64)
        .ok_or_else(|| DecodeError::MalformedJson("`seq` must be a non-negative integer".into()))?;
    let stamp = obj
        .get("stamp")
        .and_then(Value::as_f64)
        .ok_or_else(|| DecodeError::MalformedJson("`stamp` must be a number".into()))?;
    let body = obj
        .remove("body")
        .ok_or_else(|| DecodeError::MalformedJson("missing field `body`".into()))?;

    let body = match msg_type {
        MessageType::Pose => {
            let raw: RawControllerPose = body_from(body)?;
            Body::Pose(ControllerPoseMsg {
                controller_id: raw.controller_id,
                pose: raw.pose.validate()?,
            })
        }
        MessageType::Buttons => Body::Buttons(body_from(body)?),
        MessageType::Heartbeat => Body::Heartbeat(body_from(body)?),
        MessageType::EeState | MessageType::Marker => {
            let raw: RawArmPose = body_from(body)?;
            let msg = ArmPoseMsg {
                arm_id: raw.arm_id,
                pose: raw.pose.validate()?,
            };
            if msg_type == MessageType::EeState {
                Body::EeState(msg)
            } else {
                Body::Marker(msg)
            }
        }
        MessageType::Gripper => Body::Gripper(body_from(body)?),
        MessageType::Status => Body::Status(body_from(body)?),
    };
    Ok(WireMessage { seq, stamp, body })
}

/// Decoder for one inbound stream; enforces strictly increasing `seq` per type.
#[derive(Debug, Default)]
pub struct StreamDecoder {
    last_seq: HashMap<MessageType, u64>,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn decode_line(&mut self, line: &str) -> Result<WireMessage, DecodeError> {
        let msg = decode(line)?;
        let msg_type = msg.message_type();
        if let Some(&last) = self.last_seq.get(&msg_type) {
            if msg.seq <= last {
                return Err(DecodeError::NonMonotonicSeq {
                    msg_type,
                    seq: msg.seq,
                    last,
                });
            }
        }
        self.last_seq.insert(msg_type, msg.seq);
        Ok(msg)
    }
}

/// Hands out strictly increasing sequence numbers per message type, starting at 0.
#[derive(Debug, Default, Clone)]
pub struct SeqCounter {
    next: HashMap<MessageType, u64>,
}

impl SeqCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next(&mut self, msg_type: MessageType) -> u64 {
        let slot = self.next.entry(msg_type).or_insert(0);
        let seq = *slot;
        *slot += 1;
        seq
    }

    /// Wraps `body` into a message with the next sequence number for its type.
    pub fn stamp(&mut self, stamp: f64, body: Body) -> WireMessage {
        let seq = self.next(body.message_type());
        WireMessage::new(seq, stamp, body)
    }
}

pub const DEFAULT_WATCHDOG_TIMEOUT: f64 = 0.5;

impl ConnectionStatus {
    /// A controller that has never been heard from.
    pub fn new(controller_id: impl Into<String>) -> Self {
        Self {
            controller_id: controller_id.into(),
            state: LinkState::Disconnected,
            last_seen: None,
        }
    }

    pub fn is_connected(&self) -> bool {
        self.state == LinkState::Connected
    }

    /// Records a received message. Returns `Some(Connected)` on a transition.
    pub fn refresh(&mut self, now: f64) -> Option<LinkState> {
        self.last_seen = Some(self.last_seen.map_or(now, |seen| seen.max(now)));
        if self.state == LinkState::Disconnected {
            self.state = LinkState::Connected;
            Some(LinkState::Connected)
        } else {
            None
        }
    }

    /// Periodic timeout check. Returns `Some(Disconnected)` on a transition.
    pub fn watchdog_tick(&mut self, now: f64, timeout: f64) -> Option<LinkState> {
        let expired = match self.last_seen {
            Some(seen) => now - seen > timeout,
            None => true,
        };
        if expired && self.state == LinkState::Connected {
            self.state = LinkState::Disconnected;
            Some(LinkState::Disconnected)
        } else {
            None
        }
    }
}
