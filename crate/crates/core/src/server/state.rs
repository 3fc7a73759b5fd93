//! The authoritative bridge state advanced once per tick.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::protocol::{DecodeError, SensorFrame, SensorKind};
use crate::scene::{apply_flame, effective_temperature, FlameBoost, SceneInputs, SceneMapper, SceneState};
use crate::seasons::{init_season, step, Season, SeasonState, SeasonTransition};
use crate::smoothing::{Push, SmoothingWindow};

/// Temperature assumed when no reading has arrived by the end of the startup grace.
pub const FALLBACK_TEMPERATURE_C: f64 = 20.0;
pub const FALLBACK_HUMIDITY_PCT: f64 = 50.0;

/// Monotone counters shared between the ingestion, tick and client roles.
#[derive(Debug, Default)]
pub struct Diagnostics {
    pub bad_checksum: AtomicU64,
    pub bad_syntax: AtomicU64,
    pub unknown_kind: AtomicU64,
    pub clamped: AtomicU64,
    pub dropped_samples: AtomicU64,
    pub injected: AtomicU64,
    pub unknown_messages: AtomicU64,
    pub version_mismatch: AtomicU64,
    pub slow_clients_dropped: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticsSnapshot {
    pub bad_checksum: u64,
    pub bad_syntax: u64,
    pub unknown_kind: u64,
    pub clamped: u64,
    pub dropped_samples: u64,
    pub injected: u64,
    pub unknown_messages: u64,
    pub version_mismatch: u64,
    pub slow_clients_dropped: u64,
}

impl Diagnostics {
    pub fn bump(counter: &AtomicU64) {
        counter.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_decode_error(&self, err: DecodeError) {
        Self::bump(match err {
            DecodeError::BadChecksum => &self.bad_checksum,
            DecodeError::BadSyntax => &self.bad_syntax,
            DecodeError::UnknownKind => &self.unknown_kind,
        });
    }

    pub fn snapshot(&self) -> DiagnosticsSnapshot {
        let get = |c: &AtomicU64| c.load(Ordering::Relaxed);
        DiagnosticsSnapshot {
            bad_checksum: get(&self.bad_checksum),
            bad_syntax: get(&self.bad_syntax),
            unknown_kind: get(&self.unknown_kind),
            clamped: get(&self.clamped),
            dropped_samples: get(&self.dropped_samples),
            injected: get(&self.injected),
            unknown_messages: get(&self.unknown_messages),
            version_mismatch: get(&self.version_mismatch),
            slow_clients_dropped: get(&self.slow_clients_dropped),
        }
    }
}

/// A season change together with the tick that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub tick: u64,
    pub at_ms: u64,
    pub from: Season,
    pub to: Season,
    pub at_temp: f64,
}

impl TransitionEvent {
    pub fn new(tick: u64, at_ms: u64, t: SeasonTransition) -> Self {
        TransitionEvent { tick, at_ms, from: t.from, to: t.to, at_temp: t.at_temp }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

/// Result of one tick. `scene` is absent until the season has been initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickOutcome {
    pub scene: Option<SceneState>,
    pub transition: Option<TransitionEvent>,
}

#[derive(Debug, Clone)]
pub struct BridgeState {
    config: Config,
    mapper: SceneMapper,
    windows: [SmoothingWindow; 3],
    season: Option<SeasonState>,
    boost: FlameBoost,
    held_temperature: Option<f64>,
    held_humidity: Option<f64>,
    held_flame: Option<f64>,
    last_scene: Option<SceneState>,
    next_tick: u64,
    last_tick_ms: Option<u64>,
    transitions: Vec<TransitionEvent>,
}

fn slot(kind: SensorKind) -> usize {
    match kind {
        SensorKind::Temperature => 0,
        SensorKind::Humidity => 1,
        SensorKind::Flame => 2,
    }
}

impl BridgeState {
    pub fn new(config: &Config) -> Self {
        let window = |kind| SmoothingWindow::new(kind, config.window_ms);
        BridgeState {
            config: config.clone(),
            mapper: SceneMapper { anchors: config.colors, bands: config.humidity_bands },
            windows: SensorKind::ALL.map(window),
            season: None,
            boost: FlameBoost::default(),
            held_temperature: None,
            held_humidity: None,
            held_flame: None,
            last_scene: None,
            next_tick: 0,
            last_tick_ms: None,
            transitions: Vec::new(),
        }
    }

    /// Appends a frame to its window. Returns `false` when the sample arrived
    /// out of order and was dropped.
    pub fn ingest(&mut self, frame: &SensorFrame) -> bool {
        self.windows[slot(frame.kind)].push(frame.received_at, frame.value) == Push::Accepted
    }

    pub fn window(&self, kind: SensorKind) -> &SmoothingWindow {
        &self.windows[slot(kind)]
    }

    pub fn season(&self) -> Option<&SeasonState> {
        self.season.as_ref()
    }

    pub fn flame_boost(&self) -> FlameBoost {
        self.boost
    }

    pub fn last_scene(&self) -> Option<&SceneState> {
        self.last_scene.as_ref()
    }

    pub fn transitions(&self) -> &[TransitionEvent] {
        &self.transitions
    }

    /// Averages the windows, advances the flame boost and the season machine,
    /// and composes the scene for this tick.
    pub fn tick(&mut self, now_ms: u64) -> TickOutcome {
        let dt_s = match self.last_tick_ms {
            Some(last) => now_ms.saturating_sub(last) as f64 / 1000.0,
            None => 1.0 / f64::from(self.config.tick_hz),
        };
        self.last_tick_ms = Some(now_ms);

        // empty windows hold the last known value
        let temp_window = &self.windows[slot(SensorKind::Temperature)];
        if let Some(avg) = temp_window.average() {
            self.held_temperature = Some(avg);
        }
        if let Some(avg) = self.windows[slot(SensorKind::Humidity)].average() {
            self.held_humidity = Some(avg);
        }
        if let Some(level) = self.windows[slot(SensorKind::Flame)].latest() {
            self.held_flame = Some(level);
        }

        let flame_active = self.held_flame.is_some_and(|level| level >= self.config.flame.active_level);
        if dt_s > 0.0 {
            self.boost = apply_flame(self.boost, flame_active, dt_s, &self.config.flame);
        }

        let smoothed = match self.held_temperature {
            Some(t) => t,
            None if now_ms >= self.config.window_ms => FALLBACK_TEMPERATURE_C,
            None => return TickOutcome { scene: None, transition: None },
        };
        let temperature = effective_temperature(smoothed, &self.boost);
        let thresholds = &self.config.thresholds;

        let (season, transition) = match self.season {
            None => (init_season(temperature, thresholds, self.config.seed), None),
            Some(state) => step(&state, temperature, thresholds),
        };
        self.season = Some(season);
        let transition = transition.map(|t| TransitionEvent::new(self.next_tick, now_ms, t));
        self.transitions.extend(transition);

        let scene = self.mapper.compose(&SceneInputs {
            tick: self.next_tick,
            season,
            progress: thresholds.progress(temperature),
            temperature_c: temperature,
            humidity_pct: self.held_humidity.unwrap_or(FALLBACK_HUMIDITY_PCT).clamp(0.0, 100.0),
            flame: flame_active,
        });
        self.next_tick += 1;
        self.last_scene = Some(scene);
        TickOutcome { scene: Some(scene), transition }
    }
}
