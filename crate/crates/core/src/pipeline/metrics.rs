use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Rates are measured over this trailing window.
pub const RATE_WINDOW: Duration = Duration::from_secs(60);

/// Monotonic time source; tests drive a [`ManualClock`].
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
}

#[derive(Debug, Clone)]
pub struct SystemClock {
    start: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock { start: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.start.elapsed()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ManualClock {
    nanos: Arc<AtomicU64>,
}

impl ManualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, d: Duration) {
        self.nanos.fetch_add(d.as_nanos() as u64, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        Duration::from_nanos(self.nanos.load(Ordering::SeqCst))
    }
}

/// Event counts bucketed by timestamp, trimmed to the window.
#[derive(Debug, Clone, Default)]
pub(crate) struct RateWindow {
    events: VecDeque<(Duration, f64)>,
}

impl RateWindow {
    pub(crate) fn record(&mut self, at: Duration, amount: f64) {
        match self.events.back_mut() {
            Some((t, n)) if *t == at => *n += amount,
            _ => self.events.push_back((at, amount)),
        }
        self.trim(at);
    }

    fn trim(&mut self, now: Duration) {
        while let Some(&(t, _)) = self.events.front() {
            if now.saturating_sub(t) > RATE_WINDOW {
                self.events.pop_front();
            } else {
                break;
            }
        }
    }

    /// Events per second over `min(window, since_start)`.
    pub(crate) fn rate(&mut self, now: Duration, since_start: Duration) -> f64 {
        self.trim(now);
        let span = since_start.min(RATE_WINDOW).as_secs_f64();
        if span <= 0.0 {
            return 0.0;
        }
        self.events.iter().map(|(_, n)| n).sum::<f64>() / span
    }
}

/// Snapshot of buffer throughput.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineMetrics {
    pub timestamp: f64,
    /// Segments produced per second.
    pub s_p: f64,
    /// Segments consumed per second, one unit per `sample_reuse` deliveries.
    pub s_c: f64,
    /// `s_p / s_c`; `None` while either side is idle.
    pub c: Option<f64>,
    pub overwrites: u64,
    pub blocked_ms: f64,
    pub pushed: u64,
    pub delivered: u64,
    pub in_buffer: usize,
}

impl PipelineMetrics {
    /// `{timestamp, s_p, s_c, c, overwrites, blocked_ms}` as one JSON line.
    pub fn log_line(&self) -> String {
        serde_json::json!({
            "timestamp": self.timestamp,
            "s_p": self.s_p,
            "s_c": self.s_c,
            "c": self.c,
            "overwrites": self.overwrites,
            "blocked_ms": self.blocked_ms,
        })
        .to_string()
    }
}

/// Pauses or resumes actors to hold the production ratio inside a band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Governor {
    pub low: f64,
    pub high: f64,
}

impl Default for Governor {
    fn default() -> Self {
        Governor { low: 1.0, high: 1.2 }
    }
}

impl Governor {
    /// New number of running actors out of `total`.
    pub fn adjust(&self, c: Option<f64>, running: usize, total: usize) -> usize {
        match c {
            Some(c) if c > self.high && running > 1 => running - 1,
            Some(c) if c < self.low && running < total => running + 1,
            _ => running.clamp(1, total.max(1)),
        }
    }
}
