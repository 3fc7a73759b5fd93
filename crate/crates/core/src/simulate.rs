//! Virtual sensors and session logs.
//!
//! Scenarios produce frames whose `received_at` is the schedule time in
//! milliseconds from the start of the scenario. Logs store one
//! `<received_at_ms> <encoded line>` record per line and can be replayed at
//! any speed.

use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::mpsc;

use crate::clock::SimClock;
use crate::protocol::{self, EncodeError, SensorFrame, SensorKind};

pub const DEFAULT_RATE_HZ: f64 = 5.0;

fn default_rate() -> f64 {
    DEFAULT_RATE_HZ
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSpec {
    /// Linear interpolation from `start` to `end`.
    Ramp {
        sensor: SensorKind,
        start: f64,
        end: f64,
        duration_s: f64,
        #[serde(default = "default_rate")]
        rate_hz: f64,
        #[serde(default)]
        noise: f64,
    },
    Hold {
        sensor: SensorKind,
        value: f64,
        duration_s: f64,
        #[serde(default = "default_rate")]
        rate_hz: f64,
        #[serde(default)]
        noise: f64,
    },
    /// Triangle wave starting at `start`, peaking at `end` halfway through each period.
    Oscillate {
        sensor: SensorKind,
        start: f64,
        end: f64,
        period_s: f64,
        duration_s: f64,
        #[serde(default = "default_rate")]
        rate_hz: f64,
        #[serde(default)]
        noise: f64,
    },
    /// Parts played one after another.
    Composite { parts: Vec<ScenarioSpec> },
}

/// Contents of a scenario file: one scenario, or several that run side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioFile {
    Single(ScenarioSpec),
    Tracks(Vec<ScenarioSpec>),
}

impl ScenarioFile {
    pub fn tracks(&self) -> &[ScenarioSpec] {
        match self {
            ScenarioFile::Single(spec) => std::slice::from_ref(spec),
            ScenarioFile::Tracks(specs) => specs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("scenario `{field}` invalid: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("composite scenario has no parts")]
    EmptyComposite,
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field, reason: reason.into() }
}

impl ScenarioSpec {
    pub fn duration_ms(&self) -> u64 {
        match self {
            ScenarioSpec::Ramp { duration_s, .. }
            | ScenarioSpec::Hold { duration_s, .. }
            | ScenarioSpec::Oscillate { duration_s, .. } => (duration_s * 1000.0).round() as u64,
            ScenarioSpec::Composite { parts } => parts.iter().map(ScenarioSpec::duration_ms).sum(),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let check_common = |sensor: SensorKind, values: &[f64], duration_s: f64, rate_hz: f64, noise: f64| {
            if !(duration_s.is_finite() && duration_s > 0.0) {
                return Err(invalid("duration_s", format!("{duration_s} must be > 0")));
            }
            if !(rate_hz.is_finite() && rate_hz > 0.0) {
                return Err(invalid("rate_hz", format!("{rate_hz} must be > 0")));
            }
            if !(noise.is_finite() && noise >= 0.0) {
                return Err(invalid("noise", format!("{noise} must be >= 0")));
            }
            let (lo, hi) = sensor.range();
            if let Some(v) = values.iter().find(|v| !(lo..=hi).contains(*v)) {
                return Err(invalid("value", format!("{v} outside {sensor} range {lo}..={hi}")));
            }
            Ok(())
        };
        match *self {
            ScenarioSpec::Ramp { sensor, start, end, duration_s, rate_hz, noise } => {
                check_common(sensor, &[start, end], duration_s, rate_hz, noise)
            }
            ScenarioSpec::Hold { sensor, value, duration_s, rate_hz, noise } => {
                check_common(sensor, &[value], duration_s, rate_hz, noise)
            }
            ScenarioSpec::Oscillate { sensor, start, end, period_s, duration_s, rate_hz, noise } => {
                if !(period_s.is_finite() && period_s > 0.0) {
                    return Err(invalid("period_s", format!("{period_s} must be > 0")));
                }
                check_common(sensor, &[start, end], duration_s, rate_hz, noise)
            }
            ScenarioSpec::Composite { ref parts } => {
                if parts.is_empty() {
                    return Err(ScenarioError::EmptyComposite);
                }
                parts.iter().try_for_each(ScenarioSpec::validate)
            }
        }
    }
}

struct Emitter {
    rng: ChaCha8Rng,
    seq: u16,
    frames: Vec<SensorFrame>,
}

impl Emitter {
    fn emit(&mut self, sensor: SensorKind, at_ms: u64, value: f64, noise: f64) {
        let jitter = if noise > 0.0 { self.rng.random_range(-noise..=noise) } else { 0.0 };
        let value = sensor.quantize(sensor.clamp(value + jitter));
        self.frames.push(SensorFrame::new(self.seq, sensor, value).at(at_ms));
        self.seq = self.seq.wrapping_add(1);
    }

    fn run(&mut self, spec: &ScenarioSpec, offset_ms: u64) {
        let samples = |duration_s: f64, rate_hz: f64| {
            let n = ((duration_s * rate_hz).round() as usize).max(1);
            (0..n).map(move |i| (i, n, i as f64 / rate_hz))
        };
        let at = |t_s: f64| offset_ms + (t_s * 1000.0).round() as u64;
        match *spec {
            ScenarioSpec::Ramp { sensor, start, end, duration_s, rate_hz, noise } => {
                for (i, n, t) in samples(duration_s, rate_hz) {
                    let frac = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                    self.emit(sensor, at(t), start + (end - start) * frac, noise);
                }
            }
            ScenarioSpec::Hold { sensor, value, duration_s, rate_hz, noise } => {
                for (_, _, t) in samples(duration_s, rate_hz) {
                    self.emit(sensor, at(t), value, noise);
                }
            }
            ScenarioSpec::Oscillate { sensor, start, end, period_s, duration_s, rate_hz, noise } => {
                for (_, _, t) in samples(duration_s, rate_hz) {
                    let phase = (t / period_s).fract();
                    let tri = 1.0 - (2.0 * phase - 1.0).abs();
                    self.emit(sensor, at(t), start + (end - start) * tri, noise);
                }
            }
            ScenarioSpec::Composite { ref parts } => {
                let mut offset = offset_ms;
                for part in parts {
                    self.run(part, offset);
                    offset += part.duration_ms();
                }
            }
        }
    }
}

/// Frames for one scenario, deterministic per `(spec, seed)`.
pub fn generate(spec: &ScenarioSpec, seed: u64) -> Result<Vec<SensorFrame>, ScenarioError> {
    spec.validate()?;
    let mut emitter = Emitter { rng: ChaCha8Rng::seed_from_u64(seed), seq: 0, frames: Vec::new() };
    emitter.run(spec, 0);
    Ok(emitter.frames)
}

/// Runs several scenarios side by side and merges them by time. Each track
/// gets its own sequence counter and noise stream.
pub fn generate_tracks(specs: &[ScenarioSpec], seed: u64) -> Result<Vec<SensorFrame>, ScenarioError> {
    let mut all = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        all.extend(generate(spec, seed.wrapping_add(i as u64))?);
    }
    all.sort_by_key(|f| f.received_at);
    Ok(all)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub received_at_ms: u64,
    /// Encoded frame line, without the trailing newline.
    pub line: String,
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("log write failed after {written} records: {source}")]
    Io { written: usize, source: io::Error },
    #[error("frame could not be encoded after {written} records: {source}")]
    Encode { written: usize, source: EncodeError },
}

impl RecordError {
    pub fn written(&self) -> usize {
        match self {
            RecordError::Io { written, .. } | RecordError::Encode { written, .. } => *written,
        }
    }
}

/// Writes one log record per frame and flushes the sink at the end.
pub fn record<'a, W: Write>(
    frames: impl IntoIterator<Item = &'a SensorFrame>,
    mut sink: W,
) -> Result<usize, RecordError> {
    let mut written = 0;
    for frame in frames {
        let line = protocol::encode_frame(frame).map_err(|source| RecordError::Encode { written, source })?;
        sink.write_all(protocol::format_log_line(frame.received_at, &line).as_bytes())
            .map_err(|source| RecordError::Io { written, source })?;
        written += 1;
    }
    sink.flush().map_err(|source| RecordError::Io { written, source })?;
    Ok(written)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogContents {
    pub records: Vec<LogRecord>,
    /// Non-empty lines without a valid timestamp prefix.
    pub skipped: usize,
}

pub fn read_log<R: BufRead>(reader: R) -> io::Result<LogContents> {
    let mut out = LogContents::default();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match protocol::parse_log_line(&line) {
            Some((received_at_ms, encoded)) => {
                out.records.push(LogRecord { received_at_ms, line: encoded.to_string() })
            }
            None => out.skipped += 1,
        }
    }
    Ok(out)
}

/// Frames decoded from log records, with times rebased so the first frame is
/// at zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplaySchedule {
    pub frames: Vec<SensorFrame>,
    pub skipped: usize,
    pub clamped: usize,
}

/// Decodes `records` into a schedule. Records that fail to decode or go back
/// in time are skipped and counted.
pub fn replay_schedule(records: &[LogRecord]) -> ReplaySchedule {
    let mut out = ReplaySchedule::default();
    let mut origin = None;
    let mut last = 0;
    for rec in records {
        let decoded = match protocol::decode_frame(rec.line.as_bytes(), 0) {
            Ok(d) => d,
            Err(_) => {
                out.skipped += 1;
                continue;
            }
        };
        let origin = *origin.get_or_insert(rec.received_at_ms);
        if rec.received_at_ms < origin || rec.received_at_ms - origin < last {
            out.skipped += 1;
            continue;
        }
        last = rec.received_at_ms - origin;
        out.clamped += usize::from(decoded.clamped);
        out.frames.push(decoded.frame.at(last));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("replay speed must be a positive finite multiplier, got {0}")]
pub struct BadSpeed(pub f64);

/// Paced replay handle. Frames arrive on `frames` with inter-record gaps
/// divided by the speed and `received_at` taken from the live clock.
#[derive(Debug)]
pub struct Replay {
    pub frames: mpsc::Receiver<SensorFrame>,
    pub skipped: usize,
}

/// Starts replaying `records` on the current tokio runtime.
pub fn replay(records: &[LogRecord], speed: f64, clock: SimClock) -> Result<Replay, BadSpeed> {
    if !(speed.is_finite() && speed > 0.0) {
        return Err(BadSpeed(speed));
    }
    let schedule = replay_schedule(records);
    let (tx, rx) = mpsc::channel(256);
    let start_ms = clock.now_ms();
    tokio::spawn(async move {
        let start = clock.instant_at(start_ms);
        for frame in schedule.frames {
            let offset = std::time::Duration::from_secs_f64(frame.received_at as f64 / 1000.0 / speed);
            tokio::time::sleep_until(start + offset).await;
            if tx.send(frame.at(clock.now_ms())).await.is_err() {
                break;
            }
        }
    });
    Ok(Replay { frames: rx, skipped: schedule.skipped })
}
