//! Bridge configuration, loaded from JSON.
//!
//! Every key is optional and falls back to its default; unknown keys are
//! rejected so typos in a live installation surface immediately.

use std::net::SocketAddr;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{ColorAnchors, FlameConfig, HumidityBands};
use crate::seasons::Thresholds;
use crate::smoothing::DEFAULT_WINDOW_MS;

pub const DEFAULT_TICK_HZ: u32 = 10;
pub const DEFAULT_LISTEN: &str = "127.0.0.1:8777";
pub const DEFAULT_CLIENT_QUEUE: usize = 64;
pub const MAX_TICK_HZ: u32 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub thresholds: Thresholds,
    pub window_ms: u64,
    pub tick_hz: u32,
    pub listen: SocketAddr,
    pub colors: ColorAnchors,
    pub humidity_bands: HumidityBands,
    pub flame: FlameConfig,
    pub seed: u64,
    /// Outgoing messages buffered per client before it is disconnected.
    pub client_queue: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            thresholds: Thresholds::default(),
            window_ms: DEFAULT_WINDOW_MS,
            tick_hz: DEFAULT_TICK_HZ,
            listen: DEFAULT_LISTEN.parse().expect("default listen address"),
            colors: ColorAnchors::default(),
            humidity_bands: HumidityBands::default(),
            flame: FlameConfig::default(),
            seed: 0,
            client_queue: DEFAULT_CLIENT_QUEUE,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid `{key}`: {message}")]
    Invalid { key: &'static str, message: String },
}

impl Config {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key, message: String| Err(ConfigError::Invalid { key, message });
        if let Err(e) = self.thresholds.validate() {
            return invalid("thresholds", e.to_string());
        }
        if self.window_ms == 0 {
            return invalid("window_ms", "must be > 0".into());
        }
        if self.tick_hz == 0 || self.tick_hz > MAX_TICK_HZ {
            return invalid("tick_hz", format!("{} must lie within 1..={MAX_TICK_HZ}", self.tick_hz));
        }
        if let Err(e) = self.humidity_bands.validate() {
            return invalid("humidity_bands", e);
        }
        if let Err(e) = self.flame.validate() {
            return invalid("flame", e);
        }
        if self.client_queue == 0 {
            return invalid("client_queue", "must be > 0".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Config, ConfigError> {
        let config: Config = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Milliseconds between ticks, rounded down.
    pub fn tick_period_ms(&self) -> u64 {
        1000 / u64::from(self.tick_hz)
    }

    /// Simulated time of tick number `k`, computed without accumulating rounding.
    pub fn tick_time_ms(&self, k: u64) -> u64 {
        k * 1000 / u64::from(self.tick_hz)
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<Config, ConfigError> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    Config::from_json(&text)
}
