//! Time source for the engine. Simulated sessions use [`VirtualClock`] so the
//! approval countdown runs in virtual time.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

/// Milliseconds on a monotonic timeline.
pub type Millis = u64;

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> Millis;
}

/// Deterministic clock that only moves when told to. Clones share the same
/// timeline.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock {
    now: Arc<AtomicU64>,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(ms: Millis) -> Self {
        Self { now: Arc::new(AtomicU64::new(ms)) }
    }

    pub fn advance(&self, delta_ms: Millis) {
        self.now.fetch_add(delta_ms, Ordering::SeqCst);
    }

    /// Moves forward to `ms`; never moves backwards.
    pub fn advance_to(&self, ms: Millis) {
        self.now.fetch_max(ms, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> Millis {
        self.now.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> Millis {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_clock_is_shared_and_monotone() {
        let c = VirtualClock::starting_at(10);
        let c2 = c.clone();
        c.advance(5);
        assert_eq!(c2.now_ms(), 15);
        c2.advance_to(12);
        assert_eq!(c.now_ms(), 15);
        c2.advance_to(100);
        assert_eq!(c.now_ms(), 100);
    }
}
