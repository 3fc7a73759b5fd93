//! Render parameters derived from the smoothed sensors and the season.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seasons::{Season, SeasonState};

pub const DEFAULT_RAIN_HUMIDITY: f64 = 60.0;
pub const DEFAULT_RAINSTORM_HUMIDITY: f64 = 85.0;
pub const DEFAULT_FLAME_RISE_C_PER_S: f64 = 0.5;
pub const DEFAULT_FLAME_DECAY_C_PER_S: f64 = 0.2;
pub const DEFAULT_FLAME_MAX_OFFSET_C: f64 = 10.0;
pub const DEFAULT_FLAME_ACTIVE_LEVEL: f64 = 1.0;
/// Hard ceiling for the flame offset regardless of configuration.
pub const FLAME_OFFSET_LIMIT_C: f64 = 10.0;
/// Intensity reported exactly at the rain threshold, one wire step of humidity.
pub const MIN_PRECIPITATION_INTENSITY: f64 = 0.0025;

const TEMPERATURE_RANGE: (f64, f64) = (0.0, 50.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Rgb([r, g, b])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColorAnchors {
    pub winter: Rgb,
    pub spring: Rgb,
    pub summer: Rgb,
    pub autumn: Rgb,
}

impl ColorAnchors {
    pub const WINTER: Rgb = Rgb::new(245, 245, 245);
    pub const SPRING: Rgb = Rgb::new(144, 214, 120);
    pub const SUMMER: Rgb = Rgb::new(20, 100, 40);
    pub const AUTUMN: Rgb = Rgb::new(196, 150, 26);

    pub fn get(&self, season: Season) -> Rgb {
        match season {
            Season::Winter => self.winter,
            Season::Spring => self.spring,
            Season::Summer => self.summer,
            Season::Autumn => self.autumn,
        }
    }
}

impl Default for ColorAnchors {
    fn default() -> Self {
        ColorAnchors { winter: Self::WINTER, spring: Self::SPRING, summer: Self::SUMMER, autumn: Self::AUTUMN }
    }
}

/// Which side of the year the blend travels along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorPath {
    /// winter → spring → summer as progress goes 0 → 1
    Rising,
    /// winter → autumn → summer as progress goes 0 → 1
    Falling,
}

impl ColorPath {
    /// Winter and Spring blend on the rising side, Autumn on the falling
    /// side. Summer sits on both at progress 1 and follows `next` when it
    /// points at Autumn.
    pub fn select(season: Season, next: Option<Season>) -> ColorPath {
        match (season, next) {
            (Season::Autumn, _) => ColorPath::Falling,
            (Season::Summer, Some(Season::Autumn)) => ColorPath::Falling,
            _ => ColorPath::Rising,
        }
    }

    pub fn midpoint(self, anchors: &ColorAnchors) -> Rgb {
        match self {
            ColorPath::Rising => anchors.spring,
            ColorPath::Falling => anchors.autumn,
        }
    }
}

fn lerp(a: Rgb, b: Rgb, t: f64) -> Rgb {
    let mut out = [0u8; 3];
    for (o, (&x, &y)) in out.iter_mut().zip(a.0.iter().zip(b.0.iter())) {
        let (x, y) = (f64::from(x), f64::from(y));
        *o = (x + (y - x) * t).round().clamp(0.0, 255.0) as u8;
    }
    Rgb(out)
}

/// Piecewise-linear foliage tint. The first half of `progress` blends winter
/// into the path midpoint (spring or autumn), the second half the midpoint
/// into summer.
pub fn foliage_color(season: Season, next: Option<Season>, progress: f64, anchors: &ColorAnchors) -> Rgb {
    let progress = progress.clamp(0.0, 1.0);
    let mid = ColorPath::select(season, next).midpoint(anchors);
    if progress <= 0.5 {
        lerp(anchors.winter, mid, progress * 2.0)
    } else {
        lerp(mid, anchors.summer, (progress - 0.5) * 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecipitationKind {
    None,
    Rain,
    Rainstorm,
    Snow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Precipitation {
    pub kind: PrecipitationKind,
    pub intensity: f64,
}

impl Precipitation {
    pub const NONE: Precipitation = Precipitation { kind: PrecipitationKind::None, intensity: 0.0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumidityBands {
    pub rain: f64,
    pub rainstorm: f64,
}

impl Default for HumidityBands {
    fn default() -> Self {
        HumidityBands { rain: DEFAULT_RAIN_HUMIDITY, rainstorm: DEFAULT_RAINSTORM_HUMIDITY }
    }
}

impl HumidityBands {
    pub fn validate(&self) -> Result<(), String> {
        let HumidityBands { rain, rainstorm } = *self;
        if !(rain.is_finite() && rainstorm.is_finite()) || rain < 0.0 || rainstorm > 100.0 || rain >= 100.0 {
            return Err(format!("rain ({rain}) and rainstorm ({rainstorm}) must lie within 0..100"));
        }
        if rain >= rainstorm {
            return Err(format!("rain ({rain}) must be below rainstorm ({rainstorm})"));
        }
        Ok(())
    }
}

/// Rain below the storm band, rainstorm above it, snow instead of either in
/// Winter. Intensity rises linearly from the rain threshold to 100 %.
pub fn precipitation(humidity_pct: f64, season: Season, bands: &HumidityBands) -> Precipitation {
    if humidity_pct < bands.rain {
        return Precipitation::NONE;
    }
    let kind = match season {
        Season::Winter => PrecipitationKind::Snow,
        _ if humidity_pct >= bands.rainstorm => PrecipitationKind::Rainstorm,
        _ => PrecipitationKind::Rain,
    };
    let intensity = ((humidity_pct - bands.rain) / (100.0 - bands.rain)).clamp(MIN_PRECIPITATION_INTENSITY, 1.0);
    Precipitation { kind, intensity }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlameConfig {
    pub rise_c_per_s: f64,
    pub decay_c_per_s: f64,
    pub max_offset_c: f64,
    /// Latest flame reading at or above this level counts as a flame.
    pub active_level: f64,
}

impl Default for FlameConfig {
    fn default() -> Self {
        FlameConfig {
            rise_c_per_s: DEFAULT_FLAME_RISE_C_PER_S,
            decay_c_per_s: DEFAULT_FLAME_DECAY_C_PER_S,
            max_offset_c: DEFAULT_FLAME_MAX_OFFSET_C,
            active_level: DEFAULT_FLAME_ACTIVE_LEVEL,
        }
    }
}

impl FlameConfig {
    pub fn validate(&self) -> Result<(), String> {
        let rates_ok = |x: f64| x.is_finite() && x >= 0.0;
        if !rates_ok(self.rise_c_per_s) || !rates_ok(self.decay_c_per_s) {
            return Err("rise_c_per_s and decay_c_per_s must be finite and >= 0".into());
        }
        if !(0.0..=FLAME_OFFSET_LIMIT_C).contains(&self.max_offset_c) {
            return Err(format!("max_offset_c ({}) must lie within 0..={FLAME_OFFSET_LIMIT_C}", self.max_offset_c));
        }
        if !(0.0..=1023.0).contains(&self.active_level) {
            return Err(format!("active_level ({}) must lie within 0..=1023", self.active_level));
        }
        Ok(())
    }
}

/// Warming offset accumulated while a flame is held near the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FlameBoost {
    pub active: bool,
    pub offset: f64,
}

pub fn apply_flame(boost: FlameBoost, flame_active: bool, dt_s: f64, cfg: &FlameConfig) -> FlameBoost {
    let cap = cfg.max_offset_c.min(FLAME_OFFSET_LIMIT_C);
    let offset = if flame_active {
        (boost.offset + cfg.rise_c_per_s * dt_s).min(cap)
    } else {
        (boost.offset - cfg.decay_c_per_s * dt_s).max(0.0)
    };
    FlameBoost { active: flame_active, offset: offset.clamp(0.0, cap) }
}

/// Smoothed temperature plus the flame offset, kept inside the sensor range.
pub fn effective_temperature(smoothed_temp: f64, boost: &FlameBoost) -> f64 {
    (smoothed_temp + boost.offset).clamp(TEMPERATURE_RANGE.0, TEMPERATURE_RANGE.1)
}

/// Everything a client needs to draw one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    pub tick: u64,
    pub season: Season,
    pub progress: f64,
    pub temperature_c: f64,
    pub humidity_pct: f64,
    pub foliage_rgb: Rgb,
    pub precipitation: Precipitation,
    pub flame: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("scene invariant violated: {0}")]
pub struct SceneInvariantError(String);

impl SceneState {
    pub fn validate(&self) -> Result<(), SceneInvariantError> {
        let fail = |msg: String| Err(SceneInvariantError(msg));
        if !(0.0..=1.0).contains(&self.progress) {
            return fail(format!("progress {} outside 0..=1", self.progress));
        }
        if !(TEMPERATURE_RANGE.0..=TEMPERATURE_RANGE.1).contains(&self.temperature_c) {
            return fail(format!("temperature_c {} outside 0..=50", self.temperature_c));
        }
        if !(0.0..=100.0).contains(&self.humidity_pct) {
            return fail(format!("humidity_pct {} outside 0..=100", self.humidity_pct));
        }
        let Precipitation { kind, intensity } = self.precipitation;
        match kind {
            PrecipitationKind::None if intensity != 0.0 => {
                return fail(format!("no precipitation but intensity {intensity}"));
            }
            PrecipitationKind::None => {}
            _ if !(intensity > 0.0 && intensity <= 1.0) => {
                return fail(format!("{kind:?} with intensity {intensity}"));
            }
            PrecipitationKind::Snow if self.season != Season::Winter => {
                return fail(format!("snow during {}", self.season));
            }
            PrecipitationKind::Rain | PrecipitationKind::Rainstorm if self.season == Season::Winter => {
                return fail("rain during winter".into());
            }
            _ => {}
        }
        Ok(())
    }
}

/// Inputs for one broadcast record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneInputs {
    pub tick: u64,
    pub season: SeasonState,
    pub progress: f64,
    pub temperature_c: f64,
    pub humidity_pct: f64,
    pub flame: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SceneMapper {
    pub anchors: ColorAnchors,
    pub bands: HumidityBands,
}

impl SceneMapper {
    pub fn compose(&self, inputs: &SceneInputs) -> SceneState {
        let season = inputs.season.season;
        SceneState {
            tick: inputs.tick,
            season,
            progress: inputs.progress,
            temperature_c: inputs.temperature_c,
            humidity_pct: inputs.humidity_pct,
            foliage_rgb: foliage_color(season, Some(season.successor()), inputs.progress, &self.anchors),
            precipitation: precipitation(inputs.humidity_pct, season, &self.bands),
            flame: inputs.flame,
        }
    }
}
