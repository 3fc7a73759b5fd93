//! Four-season state machine driven by the smoothed temperature.
//!
//! Initialization picks Winter at or below `t_low`, Summer at or above
//! `t_high`, and a seeded coin flip between Spring and Autumn in between.
//! After that the season only moves when a threshold is crossed:
//!
//! | from   | to     | condition                      |
//! |--------|--------|--------------------------------|
//! | Winter | Spring | `temp > t_low + hysteresis`    |
//! | Spring | Summer | `temp >= t_high`               |
//! | Spring | Winter | `temp <= t_low`                |
//! | Summer | Autumn | `temp < t_high - hysteresis`   |
//! | Autumn | Winter | `temp <= t_low`                |
//! | Autumn | Summer | `temp >= t_high`               |
//!
//! Rising temperatures therefore travel Winter → Spring → Summer and falling
//! ones Summer → Autumn → Winter. At most one transition fires per step.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_T_LOW: f64 = 15.0;
pub const DEFAULT_T_HIGH: f64 = 25.0;
pub const DEFAULT_HYSTERESIS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Autumn,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Winter, Season::Spring, Season::Summer, Season::Autumn];

    /// The season that follows in the yearly cycle.
    pub fn successor(self) -> Season {
        match self {
            Season::Winter => Season::Spring,
            Season::Spring => Season::Summer,
            Season::Summer => Season::Autumn,
            Season::Autumn => Season::Winter,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Season::Winter => "winter",
            Season::Spring => "spring",
            Season::Summer => "summer",
            Season::Autumn => "autumn",
        }
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("thresholds: {0}")]
pub struct ThresholdError(String);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub t_low: f64,
    pub t_high: f64,
    pub hysteresis: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { t_low: DEFAULT_T_LOW, t_high: DEFAULT_T_HIGH, hysteresis: DEFAULT_HYSTERESIS }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), ThresholdError> {
        let Thresholds { t_low, t_high, hysteresis } = *self;
        if !(t_low.is_finite() && t_high.is_finite() && hysteresis.is_finite()) {
            return Err(ThresholdError("values must be finite".into()));
        }
        if t_low < 0.0 || t_high > 50.0 {
            return Err(ThresholdError(format!("t_low ({t_low}) and t_high ({t_high}) must lie within 0..=50")));
        }
        if t_low >= t_high {
            return Err(ThresholdError(format!("t_low ({t_low}) must be below t_high ({t_high})")));
        }
        if hysteresis < 0.0 || hysteresis >= (t_high - t_low) / 2.0 {
            return Err(ThresholdError(format!(
                "hysteresis ({hysteresis}) must be >= 0 and < half the band ({})",
                (t_high - t_low) / 2.0
            )));
        }
        Ok(())
    }

    /// Position of `temp` within `[t_low, t_high]`, saturated to `[0, 1]`.
    pub fn progress(&self, temp: f64) -> f64 {
        ((temp - self.t_low) / (self.t_high - self.t_low)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Rising,
    Falling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crossing {
    pub boundary: Boundary,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeasonTransition {
    pub from: Season,
    pub to: Season,
    pub at_temp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonState {
    pub season: Season,
    pub last_crossing: Option<Crossing>,
    pub rng_seed: u64,
}

/// 64-bit linear congruential generator (Knuth's MMIX constants).
#[derive(Debug, Clone)]
pub struct Lcg64(u64);

impl Lcg64 {
    pub const MULTIPLIER: u64 = 6_364_136_223_846_793_005;
    pub const INCREMENT: u64 = 1_442_695_040_888_963_407;

    pub fn new(seed: u64) -> Self {
        Lcg64(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_mul(Self::MULTIPLIER).wrapping_add(Self::INCREMENT);
        self.0
    }
}

/// Spring or Autumn with equal probability, fixed per seed. The first output
/// is discarded so that neighbouring seeds decorrelate.
fn mid_band_season(seed: u64) -> Season {
    let mut rng = Lcg64::new(seed);
    rng.next_u64();
    if rng.next_u64() >> 63 == 0 {
        Season::Spring
    } else {
        Season::Autumn
    }
}

pub fn init_season(avg_temp: f64, thresholds: &Thresholds, rng_seed: u64) -> SeasonState {
    let season = if avg_temp <= thresholds.t_low {
        Season::Winter
    } else if avg_temp >= thresholds.t_high {
        Season::Summer
    } else {
        mid_band_season(rng_seed)
    };
    SeasonState { season, last_crossing: None, rng_seed }
}

/// Advances the machine by at most one transition.
pub fn step(state: &SeasonState, avg_temp: f64, thresholds: &Thresholds) -> (SeasonState, Option<SeasonTransition>) {
    use Boundary::*;
    use Direction::*;

    let Thresholds { t_low, t_high, hysteresis } = *thresholds;
    let next = match state.season {
        Season::Winter if avg_temp > t_low + hysteresis => Some((Season::Spring, Low, Rising)),
        Season::Spring if avg_temp >= t_high => Some((Season::Summer, High, Rising)),
        Season::Spring if avg_temp <= t_low => Some((Season::Winter, Low, Falling)),
        Season::Summer if avg_temp < t_high - hysteresis => Some((Season::Autumn, High, Falling)),
        Season::Autumn if avg_temp <= t_low => Some((Season::Winter, Low, Falling)),
        Season::Autumn if avg_temp >= t_high => Some((Season::Summer, High, Rising)),
        _ => None,
    };

    match next {
        None => (*state, None),
        Some((to, boundary, direction)) => (
            SeasonState { season: to, last_crossing: Some(Crossing { boundary, direction }), ..*state },
            Some(SeasonTransition { from: state.season, to, at_temp: avg_temp }),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(mut state: SeasonState, temps: impl IntoIterator<Item = f64>) -> (SeasonState, Vec<SeasonTransition>) {
        let th = Thresholds::default();
        let mut events = Vec::new();
        for t in temps {
            let (next, ev) = step(&state, t, &th);
            state = next;
            events.extend(ev);
        }
        (state, events)
    }

    fn pairs(events: &[SeasonTransition]) -> Vec<(Season, Season)> {
        events.iter().map(|e| (e.from, e.to)).collect()
    }

    fn sweep(from_tenths: i32, to_tenths: i32) -> Vec<f64> {
        if from_tenths <= to_tenths {
            (from_tenths..=to_tenths).map(|k| k as f64 / 10.0).collect()
        } else {
            (to_tenths..=from_tenths).rev().map(|k| k as f64 / 10.0).collect()
        }
    }

    #[test]
    fn init_table() {
        let th = Thresholds::default();
        assert_eq!(init_season(14.0, &th, 1).season, Season::Winter);
        assert_eq!(init_season(15.0, &th, 1).season, Season::Winter);
        assert_eq!(init_season(26.0, &th, 1).season, Season::Summer);
        assert_eq!(init_season(25.0, &th, 1).season, Season::Summer);
        let mid = init_season(20.0, &th, 99).season;
        assert!(matches!(mid, Season::Spring | Season::Autumn));
        assert_eq!(init_season(20.0, &th, 99).season, mid);
    }

    #[test]
    fn both_mid_band_seasons_reachable() {
        let th = Thresholds::default();
        let seen: std::collections::HashSet<_> = (0..64).map(|s| init_season(20.0, &th, s).season).collect();
        assert!(seen.contains(&Season::Spring) && seen.contains(&Season::Autumn));
    }

    #[test]
    fn rising_sweep_goes_through_spring() {
        let start = init_season(10.0, &Thresholds::default(), 0);
        let (end, events) = run(start, sweep(100, 300));
        assert_eq!(pairs(&events), vec![(Season::Winter, Season::Spring), (Season::Spring, Season::Summer)]);
        assert_eq!(end.season, Season::Summer);
        assert_eq!(events[0].at_temp, 15.6);
        assert_eq!(events[1].at_temp, 25.0);
    }

    #[test]
    fn falling_sweep_goes_through_autumn() {
        let start = init_season(30.0, &Thresholds::default(), 0);
        let (end, events) = run(start, sweep(300, 100));
        assert_eq!(pairs(&events), vec![(Season::Summer, Season::Autumn), (Season::Autumn, Season::Winter)]);
        assert_eq!(end.season, Season::Winter);
        assert_eq!(events[0].at_temp, 24.4);
        assert_eq!(events[1].at_temp, 15.0);
        assert_eq!(end.last_crossing, Some(Crossing { boundary: Boundary::Low, direction: Direction::Falling }));
    }

    #[test]
    fn oscillation_inside_dead_band_does_not_flap() {
        let start = init_season(14.8, &Thresholds::default(), 0);
        let temps = (0..200).map(|i| if i % 2 == 0 { 14.8 } else { 15.2 });
        let (end, events) = run(start, temps);
        assert!(events.is_empty());
        assert_eq!(end.season, Season::Winter);
    }

    #[test]
    fn large_jump_takes_two_steps() {
        let start = init_season(5.0, &Thresholds::default(), 0);
        let (s1, e1) = step(&start, 40.0, &Thresholds::default());
        assert_eq!(e1.map(|e| e.to), Some(Season::Spring));
        let (s2, e2) = step(&s1, 40.0, &Thresholds::default());
        assert_eq!(e2.map(|e| e.to), Some(Season::Summer));
        assert_eq!(step(&s2, 40.0, &Thresholds::default()).1, None);
    }

    #[test]
    fn progress_endpoints() {
        let th = Thresholds::default();
        assert_eq!(th.progress(15.0), 0.0);
        assert_eq!(th.progress(25.0), 1.0);
        assert_eq!(th.progress(20.0), 0.5);
        assert_eq!(th.progress(3.0), 0.0);
        assert_eq!(th.progress(45.0), 1.0);
    }

    #[test]
    fn threshold_validation() {
        assert!(Thresholds::default().validate().is_ok());
        let bad = Thresholds { t_low: 30.0, t_high: 25.0, ..Default::default() };
        assert!(bad.validate().unwrap_err().to_string().starts_with("thresholds"));
        let bad = Thresholds { hysteresis: 5.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = Thresholds { t_high: 60.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    fn any_season() -> impl Strategy<Value = Season> {
        prop_oneof![Just(Season::Winter), Just(Season::Spring), Just(Season::Summer), Just(Season::Autumn)]
    }

    proptest! {
        #[test]
        fn monotone_sweeps_reach_extremes(season in any_season(), start in 0i32..500) {
            let state = SeasonState { season, last_crossing: None, rng_seed: 0 };
            prop_assert_eq!(run(state, sweep(start, 500)).0.season, Season::Summer);
            prop_assert_eq!(run(state, sweep(start, 0)).0.season, Season::Winter);
        }

        #[test]
        fn rising_sweep_never_enters_autumn(seed in any::<u64>(), start in 0i32..500) {
            let state = init_season(start as f64 / 10.0, &Thresholds::default(), seed);
            let (end, events) = run(state, sweep(start, 500));
            prop_assert_eq!(end.season, Season::Summer);
            prop_assert!(events.iter().all(|e| e.to != Season::Autumn));
        }

        #[test]
        fn falling_sweep_never_enters_spring(seed in any::<u64>(), start in 0i32..500) {
            let state = init_season(start as f64 / 10.0, &Thresholds::default(), seed);
            let (end, events) = run(state, sweep(start, 0));
            prop_assert_eq!(end.season, Season::Winter);
            prop_assert!(events.iter().all(|e| e.to != Season::Spring));
        }

        #[test]
        fn dead_band_holds_extremes(trace in proptest::collection::vec(0.0f64..=1.0, 1..100)) {
            let th = Thresholds::default();
            let low = trace.iter().map(|f| th.t_low + th.hysteresis * f.max(1e-9));
            let winter = SeasonState { season: Season::Winter, last_crossing: None, rng_seed: 0 };
            prop_assert!(run(winter, low).1.is_empty());
            let high = trace.iter().map(|f| th.t_high - th.hysteresis * f);
            let summer = SeasonState { season: Season::Summer, last_crossing: None, rng_seed: 0 };
            prop_assert!(run(summer, high).1.is_empty());
        }

        #[test]
        fn deterministic(seed in any::<u64>(), trace in proptest::collection::vec(0.0f64..50.0, 1..50)) {
            let th = Thresholds::default();
            let a = run(init_season(trace[0], &th, seed), trace.clone());
            let b = run(init_season(trace[0], &th, seed), trace);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn crossing_matches_season(seed in any::<u64>(), trace in proptest::collection::vec(0.0f64..50.0, 1..80)) {
            let th = Thresholds::default();
            let mut state = init_season(trace[0], &th, seed);
            for t in trace {
                state = step(&state, t, &th).0;
                match (state.season, state.last_crossing) {
                    (Season::Spring, Some(c)) => prop_assert_eq!(c, Crossing { boundary: Boundary::Low, direction: Direction::Rising }),
                    (Season::Autumn, Some(c)) => prop_assert_eq!(c, Crossing { boundary: Boundary::High, direction: Direction::Falling }),
                    _ => {}
                }
            }
        }
    }
}
