//! ASCII line codec for sensor frames.
//!
//! One frame per line, NMEA style:
//!
//! ```text
//! $TW,<seq>,<K>,<value>*<HH>\n
//! ```
//!
//! `<K>` is `T`, `H` or `F`. Temperature and humidity carry exactly one
//! fractional digit, flame levels are integers. `<HH>` is the XOR of every
//! byte strictly between `$` and `*`, as two uppercase hex digits.
//!
//! Log files store one record per line as `<received_at_ms> <line>`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Talker prefix that opens every payload.
pub const TALKER: &str = "TW";

/// Serial link parameters expected from the microcontroller.
pub const SERIAL_BAUD: u32 = 9600;
pub const SERIAL_DATA_BITS: u8 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorKind {
    Temperature,
    Humidity,
    Flame,
}

impl SensorKind {
    pub const ALL: [SensorKind; 3] = [SensorKind::Temperature, SensorKind::Humidity, SensorKind::Flame];

    pub fn code(self) -> u8 {
        match self {
            SensorKind::Temperature => b'T',
            SensorKind::Humidity => b'H',
            SensorKind::Flame => b'F',
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            b'T' => Some(SensorKind::Temperature),
            b'H' => Some(SensorKind::Humidity),
            b'F' => Some(SensorKind::Flame),
            _ => None,
        }
    }

    /// Physical range of the sensor. Temperature follows the DHT11 (0 to 50 °C),
    /// humidity is relative humidity in percent and flame is a 10-bit ADC level.
    pub fn range(self) -> (f64, f64) {
        match self {
            SensorKind::Temperature => (0.0, 50.0),
            SensorKind::Humidity => (0.0, 100.0),
            SensorKind::Flame => (0.0, 1023.0),
        }
    }

    /// Number of fractional digits carried on the wire.
    pub fn wire_decimals(self) -> u32 {
        match self {
            SensorKind::Temperature | SensorKind::Humidity => 1,
            SensorKind::Flame => 0,
        }
    }

    pub fn clamp(self, value: f64) -> f64 {
        let (lo, hi) = self.range();
        value.clamp(lo, hi)
    }

    /// Rounds `value` to the wire resolution (half away from zero on the
    /// shortest decimal representation), the same rule the decoder applies.
    pub fn quantize(self, value: f64) -> f64 {
        let scaled = parse_scaled(&value.to_string(), self.wire_decimals())
            .expect("finite f64 always has a plain decimal representation");
        scaled_to_f64(scaled, self.wire_decimals())
    }
}

impl fmt::Display for SensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SensorKind::Temperature => "temperature",
            SensorKind::Humidity => "humidity",
            SensorKind::Flame => "flame",
        })
    }
}

/// One reading from one sensor. `received_at` is stamped by the receiver and
/// never travels on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub seq: u16,
    pub kind: SensorKind,
    pub value: f64,
    pub received_at: u64,
}

impl SensorFrame {
    pub fn new(seq: u16, kind: SensorKind, value: f64) -> Self {
        SensorFrame { seq, kind, value, received_at: 0 }
    }

    pub fn at(mut self, received_at: u64) -> Self {
        self.received_at = received_at;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodeError {
    #[error("frame field `{field}` out of range: {value}")]
    OutOfRange { field: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
pub enum DecodeError {
    #[error("checksum mismatch")]
    BadChecksum,
    #[error("malformed frame")]
    BadSyntax,
    #[error("unknown sensor kind")]
    UnknownKind,
}

/// A successfully decoded line. `clamped` is set when the value on the wire
/// fell outside the sensor range and was pulled back in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decoded {
    pub frame: SensorFrame,
    pub clamped: bool,
}

/// XOR fold of `bytes`.
pub fn checksum(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0, |acc, b| acc ^ b)
}

pub fn encode_frame(frame: &SensorFrame) -> Result<String, EncodeError> {
    let (lo, hi) = frame.kind.range();
    if !frame.value.is_finite() || frame.value < lo || frame.value > hi {
        return Err(EncodeError::OutOfRange { field: "value", value: frame.value });
    }
    let decimals = frame.kind.wire_decimals();
    let scaled =
        parse_scaled(&frame.value.to_string(), decimals).expect("finite f64 always has a plain decimal representation");
    let payload = format!("{TALKER},{},{},{}", frame.seq, frame.kind.code() as char, format_scaled(scaled, decimals));
    Ok(format!("${payload}*{:02X}\n", checksum(payload.as_bytes())))
}

/// Decodes one line. Accepts an optional `\n` or `\r\n` terminator; anything
/// else after the checksum is a syntax error.
pub fn decode_frame(line: &[u8], now: u64) -> Result<Decoded, DecodeError> {
    let line = line.strip_suffix(b"\r\n").or_else(|| line.strip_suffix(b"\n")).unwrap_or(line);

    let body = line.strip_prefix(b"$").ok_or(DecodeError::BadSyntax)?;
    if body.len() < 3 {
        return Err(DecodeError::BadSyntax);
    }
    let (payload, tail) = body.split_at(body.len() - 3);
    if tail[0] != b'*' {
        return Err(DecodeError::BadSyntax);
    }
    let expected =
        (upper_hex(tail[1]).ok_or(DecodeError::BadSyntax)? << 4) | upper_hex(tail[2]).ok_or(DecodeError::BadSyntax)?;
    if payload.contains(&b'*') || payload.contains(&b'$') {
        return Err(DecodeError::BadSyntax);
    }
    if checksum(payload) != expected {
        return Err(DecodeError::BadChecksum);
    }

    let payload = std::str::from_utf8(payload).map_err(|_| DecodeError::BadSyntax)?;
    let mut fields = payload.split(',');
    let (Some(talker), Some(seq), Some(kind), Some(value), None) =
        (fields.next(), fields.next(), fields.next(), fields.next(), fields.next())
    else {
        return Err(DecodeError::BadSyntax);
    };
    if talker != TALKER {
        return Err(DecodeError::BadSyntax);
    }
    if seq.is_empty() || !seq.bytes().all(|b| b.is_ascii_digit()) {
        return Err(DecodeError::BadSyntax);
    }
    let seq: u16 = seq.parse().map_err(|_| DecodeError::BadSyntax)?;
    let kind = match kind.as_bytes() {
        [code] => SensorKind::from_code(*code).ok_or(DecodeError::UnknownKind)?,
        [] => return Err(DecodeError::BadSyntax),
        _ => return Err(DecodeError::UnknownKind),
    };
    let decimals = kind.wire_decimals();
    let raw = scaled_to_f64(parse_scaled(value, decimals).ok_or(DecodeError::BadSyntax)?, decimals);
    let value = kind.clamp(raw);

    Ok(Decoded { frame: SensorFrame { seq, kind, value, received_at: now }, clamped: value != raw })
}

/// `<received_at_ms> <encoded line>`, newline included.
pub fn format_log_line(received_at_ms: u64, encoded: &str) -> String {
    let mut out = format!("{received_at_ms} {encoded}");
    if !out.ends_with('\n') {
        out.push('\n');
    }
    out
}

/// Splits a log line into its timestamp and the encoded frame line.
pub fn parse_log_line(line: &str) -> Option<(u64, &str)> {
    let line = line.trim_end_matches(['\r', '\n']);
    let (ts, rest) = line.split_once(' ')?;
    if ts.is_empty() || !ts.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((ts.parse().ok()?, rest))
}

fn upper_hex(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'A'..=b'F' => Some(b - b'A' + 10),
        _ => None,
    }
}

/// Parses `-?digits(.digits)?` into an integer scaled by `10^decimals`,
/// rounding extra fractional digits half away from zero. Saturates on overflow.
fn parse_scaled(text: &str, decimals: u32) -> Option<i64> {
    let (negative, unsigned) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (int_part, frac_part) = match unsigned.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (unsigned, None),
    };
    let digits_ok = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits_ok(int_part) || frac_part.is_some_and(|f| !digits_ok(f)) {
        return None;
    }

    let mut scaled: i64 = 0;
    for b in int_part.bytes() {
        scaled = scaled.saturating_mul(10).saturating_add(i64::from(b - b'0'));
    }
    let frac = frac_part.unwrap_or("").as_bytes();
    for i in 0..decimals as usize {
        let digit = frac.get(i).map_or(0, |b| i64::from(b - b'0'));
        scaled = scaled.saturating_mul(10).saturating_add(digit);
    }
    if frac.get(decimals as usize).is_some_and(|&b| b >= b'5') {
        scaled = scaled.saturating_add(1);
    }
    Some(if negative { -scaled } else { scaled })
}

fn scaled_to_f64(scaled: i64, decimals: u32) -> f64 {
    scaled as f64 / 10f64.powi(decimals as i32)
}

fn format_scaled(scaled: i64, decimals: u32) -> String {
    if decimals == 0 {
        return scaled.to_string();
    }
    let unit = 10i64.pow(decimals);
    format!("{}.{:0width$}", scaled / unit, scaled % unit, width = decimals as usize)
}
