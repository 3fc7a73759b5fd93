//! Simulated millisecond clock, optionally running faster than wall time.

use std::time::Duration;

use tokio::time::Instant;

#[derive(Debug, Clone, Copy)]
pub struct SimClock {
    origin: Instant,
    speed: f64,
}

impl SimClock {
    /// `speed` simulated milliseconds elapse per wall millisecond.
    pub fn new(speed: f64) -> Self {
        assert!(speed.is_finite() && speed > 0.0, "clock speed must be positive");
        SimClock { origin: Instant::now(), speed }
    }

    pub fn wall() -> Self {
        Self::new(1.0)
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn now_ms(&self) -> u64 {
        (self.origin.elapsed().as_secs_f64() * 1000.0 * self.speed) as u64
    }

    /// Wall instant at which the simulated clock reads `sim_ms`.
    pub fn instant_at(&self, sim_ms: u64) -> Instant {
        self.origin + Duration::from_secs_f64(sim_ms as f64 / 1000.0 / self.speed)
    }

    pub async fn sleep_until(&self, sim_ms: u64) {
        tokio::time::sleep_until(self.instant_at(sim_ms)).await;
    }
}
