//! Time-bounded averaging window.

use std::collections::VecDeque;

use crate::protocol::SensorKind;

pub const DEFAULT_WINDOW_MS: u64 = 3000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Push {
    Accepted,
    /// Timestamp older than the newest retained sample; the window is untouched.
    DroppedOutOfOrder,
}

/// Samples received within the last `duration_ms`, oldest first.
#[derive(Debug, Clone)]
pub struct SmoothingWindow {
    kind: SensorKind,
    duration_ms: u64,
    samples: VecDeque<(u64, f64)>,
    last_t: Option<u64>,
    dropped: u64,
}

impl SmoothingWindow {
    pub fn new(kind: SensorKind, duration_ms: u64) -> Self {
        SmoothingWindow { kind, duration_ms, samples: VecDeque::new(), last_t: None, dropped: 0 }
    }

    pub fn kind(&self) -> SensorKind {
        self.kind
    }

    pub fn duration_ms(&self) -> u64 {
        self.duration_ms
    }

    /// Appends a sample at `t` and evicts everything older than `t - duration`.
    pub fn push(&mut self, t: u64, value: f64) -> Push {
        if self.last_t.is_some_and(|last| t < last) {
            self.dropped += 1;
            return Push::DroppedOutOfOrder;
        }
        self.last_t = Some(t);
        self.samples.push_back((t, value));
        let horizon = t.saturating_sub(self.duration_ms);
        while self.samples.front().is_some_and(|&(ts, _)| ts < horizon) {
            self.samples.pop_front();
        }
        Push::Accepted
    }

    /// Arithmetic mean of the retained samples.
    pub fn average(&self) -> Option<f64> {
        if self.samples.is_empty() {
            return None;
        }
        let sum: f64 = self.samples.iter().map(|&(_, v)| v).sum();
        Some(sum / self.samples.len() as f64)
    }

    pub fn latest(&self) -> Option<f64> {
        self.samples.back().map(|&(_, v)| v)
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = (u64, f64)> + '_ {
        self.samples.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples rejected for arriving out of order.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}
