//! Time sources. All times are microseconds since the Unix epoch.

use std::fmt::Debug;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

pub trait Clock: Send + Sync + Debug {
    fn now_micros(&self) -> u64;

    fn now_ms(&self) -> u64 {
        self.now_micros() / 1_000
    }
}

/// Wall clock that never runs backwards within the process.
#[derive(Debug, Default)]
pub struct SystemClock {
    last: AtomicU64,
}

impl SystemClock {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Clock for SystemClock {
    fn now_micros(&self) -> u64 {
        let wall = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_micros() as u64)
            .unwrap_or(0);
        let prev = self.last.fetch_max(wall, Ordering::AcqRel);
        prev.max(wall)
    }
}

/// A clock moved by hand; used by tests.
#[derive(Debug)]
pub struct ManualClock {
    now: AtomicU64,
}

impl ManualClock {
    pub fn new(start_micros: u64) -> Self {
        ManualClock {
            now: AtomicU64::new(start_micros),
        }
    }

    pub fn advance_micros(&self, delta: u64) {
        self.now.fetch_add(delta, Ordering::AcqRel);
    }

    pub fn advance_ms(&self, delta: u64) {
        self.advance_micros(delta * 1_000);
    }

    pub fn set_micros(&self, value: u64) {
        self.now.fetch_max(value, Ordering::AcqRel);
    }
}

impl Clock for ManualClock {
    fn now_micros(&self) -> u64 {
        self.now.load(Ordering::Acquire)
    }
}

/// Fixed offset applied on top of another clock, modelling skew between
/// front-end machines.
#[derive(Debug)]
pub struct SkewedClock<C> {
    inner: C,
    offset_micros: i64,
}

impl<C: Clock> SkewedClock<C> {
    pub fn new(inner: C, offset_micros: i64) -> Self {
        SkewedClock { inner, offset_micros }
    }
}

impl<C: Clock> Clock for SkewedClock<C> {
    fn now_micros(&self) -> u64 {
        self.inner.now_micros().saturating_add_signed(self.offset_micros)
    }
}

impl<C: Clock + ?Sized> Clock for std::sync::Arc<C> {
    fn now_micros(&self) -> u64 {
        (**self).now_micros()
    }
}
