use std::sync::atomic::{AtomicU64, Ordering};

use chrono::{DateTime, SecondsFormat, Utc};

/// Source of timestamps for ledger entries, activities and approvals.
pub trait Clock: Send + Sync {
    fn now(&self) -> String;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> String {
        Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
    }
}

/// Deterministic clock: starts at `origin` and advances by `step_ms` on every
/// reading.
#[derive(Debug)]
pub struct FixedClock {
    origin: DateTime<Utc>,
    step_ms: u64,
    ticks: AtomicU64,
}

impl FixedClock {
    pub fn new(origin: DateTime<Utc>, step_ms: u64) -> Self {
        Self { origin, step_ms, ticks: AtomicU64::new(0) }
    }

    /// 2026-01-01T00:00:00Z, one second per reading.
    pub fn epoch() -> Self {
        let origin = DateTime::parse_from_rfc3339("2026-01-01T00:00:00Z")
            .expect("valid literal")
            .with_timezone(&Utc);
        Self::new(origin, 1000)
    }
}

impl Clock for FixedClock {
    fn now(&self) -> String {
        let n = self.ticks.fetch_add(1, Ordering::SeqCst);
        let at = self.origin + chrono::Duration::milliseconds((n * self.step_ms) as i64);
        at.to_rfc3339_opts(SecondsFormat::Millis, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_clock_advances() {
        let c = FixedClock::epoch();
        assert_eq!(c.now(), "2026-01-01T00:00:00.000Z");
        assert_eq!(c.now(), "2026-01-01T00:00:01.000Z");
    }
}
