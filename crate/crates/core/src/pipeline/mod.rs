//! Bounded hand-off between actors and the learner.
//!
//! The queue discipline blocks producers when full and hands each item out
//! exactly `sample_reuse` times in FIFO order before retiring it. The ring
//! discipline never blocks: it overwrites the oldest slot and samples uniformly
//! with replacement.

mod metrics;

use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use metrics::RateWindow;
pub use metrics::{Clock, Governor, ManualClock, PipelineMetrics, SystemClock, RATE_WINDOW};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PipelineError {
    #[error("buffer shut down")]
    Shutdown,
    #[error("invalid buffer config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Discipline {
    Queue,
    Ring,
}

impl std::str::FromStr for Discipline {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "queue" => Ok(Discipline::Queue),
            "ring" => Ok(Discipline::Ring),
            _ => Err(PipelineError::Config(format!("unknown discipline '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferConfig {
    pub discipline: Discipline,
    pub capacity: usize,
    pub sample_reuse: u32,
    /// Largest batch the consumer will ask for.
    pub batch_size: usize,
}

impl BufferConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.capacity == 0 || self.batch_size == 0 || self.sample_reuse == 0 {
            return Err(PipelineError::Config("capacity, batch size and reuse must be positive".into()));
        }
        if self.capacity < self.batch_size {
            return Err(PipelineError::Config("capacity must be at least the batch size".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PushOutcome {
    Accepted,
    /// Queue was full; the producer waited this long.
    Blocked(Duration),
    /// Ring overwrote the item with this sequence number.
    Overwrote(u64),
}

/// An item as delivered, tagged with its push sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivered<T> {
    pub seq: u64,
    pub item: T,
}

struct Entry<T> {
    seq: u64,
    item: T,
    delivered: u32,
}

struct Inner<T> {
    slots: VecDeque<Entry<T>>,
    /// Ring write position once the ring is full.
    ring_next: usize,
    next_seq: u64,
    shutdown: bool,
    pushed: u64,
    delivered: u64,
    overwrites: u64,
    blocked: Duration,
    /// Final consumption count of every item that left the buffer.
    retired_counts: Vec<u32>,
    produced: RateWindow,
    consumed: RateWindow,
    rng: ChaCha8Rng,
}

/// Multi-producer, single-consumer buffer.
pub struct Buffer<T> {
    cfg: BufferConfig,
    inner: Mutex<Inner<T>>,
    not_full: Condvar,
    not_empty: Condvar,
    clock: Arc<dyn Clock>,
    started: Duration,
}

impl<T: Clone> Buffer<T> {
    pub fn new(cfg: BufferConfig, clock: Arc<dyn Clock>, seed: u64) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let started = clock.now();
        Ok(Buffer {
            cfg,
            inner: Mutex::new(Inner {
                slots: VecDeque::with_capacity(cfg.capacity),
                ring_next: 0,
                next_seq: 0,
                shutdown: false,
                pushed: 0,
                delivered: 0,
                overwrites: 0,
                blocked: Duration::ZERO,
                retired_counts: Vec::new(),
                produced: RateWindow::default(),
                consumed: RateWindow::default(),
                rng: ChaCha8Rng::seed_from_u64(seed),
            }),
            not_full: Condvar::new(),
            not_empty: Condvar::new(),
            clock,
            started,
        })
    }

    pub fn config(&self) -> BufferConfig {
        self.cfg
    }

    fn lock(&self) -> MutexGuard<'_, Inner<T>> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn push(&self, item: T) -> Result<PushOutcome, PipelineError> {
        let mut g = self.lock();
        if g.shutdown {
            return Err(PipelineError::Shutdown);
        }
        let mut outcome = PushOutcome::Accepted;
        let seq = g.next_seq;
        let entry = Entry { seq, item, delivered: 0 };
        match self.cfg.discipline {
            Discipline::Queue => {
                if g.slots.len() >= self.cfg.capacity {
                    let t0 = self.clock.now();
                    while g.slots.len() >= self.cfg.capacity && !g.shutdown {
                        g = self.not_full.wait(g).unwrap_or_else(|e| e.into_inner());
                    }
                    if g.shutdown {
                        return Err(PipelineError::Shutdown);
                    }
                    let waited = self.clock.now().saturating_sub(t0);
                    g.blocked += waited;
                    outcome = PushOutcome::Blocked(waited);
                }
                // another producer may have pushed while we waited
                let seq = g.next_seq;
                g.slots.push_back(Entry { seq, ..entry });
            }
            Discipline::Ring => {
                if g.slots.len() < self.cfg.capacity {
                    g.slots.push_back(entry);
                } else {
                    let at = g.ring_next;
                    let victim = std::mem::replace(&mut g.slots[at], entry);
                    g.ring_next = (at + 1) % self.cfg.capacity;
                    g.overwrites += 1;
                    g.retired_counts.push(victim.delivered);
                    outcome = PushOutcome::Overwrote(victim.seq);
                }
            }
        }
        g.next_seq += 1;
        g.pushed += 1;
        let now = self.clock.now();
        g.produced.record(now, 1.0);
        drop(g);
        self.not_empty.notify_all();
        Ok(outcome)
    }

    /// Blocks until `n` items are available (queue) or live (ring).
    pub fn pop_batch(&self, n: usize) -> Result<Vec<Delivered<T>>, PipelineError> {
        self.check_batch(n)?;
        let mut g = self.lock();
        while g.slots.len() < n && !g.shutdown {
            g = self.not_empty.wait(g).unwrap_or_else(|e| e.into_inner());
        }
        self.take_batch(g, n)
    }

    /// Like [`Buffer::pop_batch`] but gives up after `timeout` with `Ok(None)`.
    pub fn pop_batch_timeout(&self, n: usize, timeout: Duration) -> Result<Option<Vec<Delivered<T>>>, PipelineError> {
        self.check_batch(n)?;
        let g = self.lock();
        let (g, _) = self
            .not_empty
            .wait_timeout_while(g, timeout, |g| g.slots.len() < n && !g.shutdown)
            .unwrap_or_else(|e| e.into_inner());
        if g.slots.len() < n && !g.shutdown {
            return Ok(None);
        }
        self.take_batch(g, n).map(Some)
    }

    fn check_batch(&self, n: usize) -> Result<(), PipelineError> {
        if n == 0 || n > self.cfg.capacity {
            return Err(PipelineError::Config(format!("batch of {n} from capacity {}", self.cfg.capacity)));
        }
        Ok(())
    }

    fn take_batch(&self, mut g: MutexGuard<'_, Inner<T>>, n: usize) -> Result<Vec<Delivered<T>>, PipelineError> {
        if g.shutdown {
            return Err(PipelineError::Shutdown);
        }
        let inner = &mut *g;
        let mut out = Vec::with_capacity(n);
        match self.cfg.discipline {
            Discipline::Queue => {
                for e in inner.slots.iter_mut().take(n) {
                    e.delivered += 1;
                    out.push(Delivered { seq: e.seq, item: e.item.clone() });
                }
                let mut freed = false;
                while inner.slots.front().is_some_and(|e| e.delivered >= self.cfg.sample_reuse) {
                    let e = inner.slots.pop_front().expect("front exists");
                    inner.retired_counts.push(e.delivered);
                    freed = true;
                }
                if freed {
                    self.not_full.notify_all();
                }
            }
            Discipline::Ring => {
                let live = inner.slots.len();
                for _ in 0..n {
                    let i = inner.rng.random_range(0..live);
                    let e = &mut inner.slots[i];
                    e.delivered += 1;
                    out.push(Delivered { seq: e.seq, item: e.item.clone() });
                }
            }
        }
        inner.delivered += n as u64;
        let now = self.clock.now();
        inner.consumed.record(now, n as f64 / self.cfg.sample_reuse as f64);
        Ok(out)
    }

    /// Wakes every waiter; later calls fail with [`PipelineError::Shutdown`].
    pub fn shutdown(&self) {
        self.lock().shutdown = true;
        self.not_full.notify_all();
        self.not_empty.notify_all();
    }

    pub fn is_shutdown(&self) -> bool {
        self.lock().shutdown
    }

    pub fn len(&self) -> usize {
        self.lock().slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Consumption count of every item pushed so far (retired and live).
    pub fn consumption_counts(&self) -> Vec<u32> {
        let g = self.lock();
        let mut v = g.retired_counts.clone();
        v.extend(g.slots.iter().map(|e| e.delivered));
        v
    }

    pub fn metrics(&self) -> PipelineMetrics {
        let now = self.clock.now();
        let since = now.saturating_sub(self.started);
        let mut g = self.lock();
        let s_p = g.produced.rate(now, since);
        let s_c = g.consumed.rate(now, since);
        let c = if s_p > 0.0 && s_c > 0.0 { Some(s_p / s_c) } else { None };
        PipelineMetrics {
            timestamp: now.as_secs_f64(),
            s_p,
            s_c,
            c,
            overwrites: g.overwrites,
            blocked_ms: g.blocked.as_secs_f64() * 1e3,
            pushed: g.pushed,
            delivered: g.delivered,
            in_buffer: g.slots.len(),
        }
    }
}
