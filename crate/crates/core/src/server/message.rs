//! JSON messages exchanged with stream clients.

use serde::Serialize;
use serde_json::Value;

use crate::protocol::{SensorFrame, SensorKind};
use crate::scene::SceneState;

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    #[serde(rename = "type")]
    kind: &'static str,
    v: u64,
    #[serde(flatten)]
    body: &'a T,
}

/// `{"type":"state","v":1,...}` with the scene fields in declaration order.
pub fn state_message(scene: &SceneState) -> String {
    serde_json::to_string(&Tagged { kind: "state", v: PROTOCOL_VERSION, body: scene }).expect("scene serializes")
}

pub fn hello_message() -> String {
    format!(r#"{{"type":"hello","v":{PROTOCOL_VERSION}}}"#)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClientMessage {
    Hello { v: u64 },
    Inject { kind: SensorKind, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientMessageError {
    /// Valid JSON object whose `type` is not one we understand.
    UnknownType,
    /// An inject naming a sensor that does not exist.
    UnknownKind,
    Malformed,
}

pub fn parse_client_message(text: &str) -> Result<ClientMessage, ClientMessageError> {
    use ClientMessageError::*;

    let value: Value = serde_json::from_str(text).map_err(|_| Malformed)?;
    let obj = value.as_object().ok_or(Malformed)?;
    match obj.get("type").and_then(Value::as_str).ok_or(Malformed)? {
        "hello" => {
            let v = obj.get("v").and_then(Value::as_u64).ok_or(Malformed)?;
            Ok(ClientMessage::Hello { v })
        }
        "inject" => {
            let value = obj.get("value").and_then(Value::as_f64).ok_or(Malformed)?;
            let kind = match obj.get("kind").and_then(Value::as_str).ok_or(Malformed)? {
                "temperature" => SensorKind::Temperature,
                "humidity" => SensorKind::Humidity,
                "flame" => SensorKind::Flame,
                _ => return Err(UnknownKind),
            };
            Ok(ClientMessage::Inject { kind, value })
        }
        _ => Err(UnknownType),
    }
}

/// Turns an injected reading into a frame on the same footing as a decoded
/// serial line. The flag reports whether the value had to be clamped.
pub fn handle_inject(kind: SensorKind, value: f64, seq: u16, now_ms: u64) -> (SensorFrame, bool) {
    let clamped = kind.clamp(value);
    let frame = SensorFrame::new(seq, kind, kind.quantize(clamped)).at(now_ms);
    (frame, clamped != value)
}
