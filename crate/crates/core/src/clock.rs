//! Time sources and week-slot arithmetic.
//!
//! Every timestamp in the crate is milliseconds since the Unix epoch (UTC).
//! Profiles are keyed in the agent's local civil time, obtained by adding the
//! agent's UTC offset before slotting.

use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

/// Milliseconds since the Unix epoch.
pub type Millis = i64;

pub const SECOND_MS: Millis = 1_000;
pub const MINUTE_MS: Millis = 60 * SECOND_MS;
pub const QUARTER_MS: Millis = 15 * MINUTE_MS;
pub const DAY_MS: Millis = 24 * 60 * MINUTE_MS;
pub const WEEK_MS: Millis = 7 * DAY_MS;

pub const MINUTES_PER_DAY: usize = 1440;
pub const QUARTERS_PER_DAY: usize = 96;
/// 7 × 1440 minute slots.
pub const POWER_SLOTS: usize = 7 * MINUTES_PER_DAY;
/// 7 × 96 quarter-hour slots.
pub const LOCATION_SLOTS: usize = 7 * QUARTERS_PER_DAY;

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> Millis;
}

/// Wall clock.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> Millis {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as Millis)
            .unwrap_or(0)
    }
}

/// A manually advanced clock shared between every component of a simulation.
#[derive(Debug, Clone)]
pub struct VirtualClock {
    now: Arc<AtomicI64>,
}

impl VirtualClock {
    pub fn new(start: Millis) -> Self {
        Self {
            now: Arc::new(AtomicI64::new(start)),
        }
    }

    pub fn advance(&self, by: Millis) -> Millis {
        self.now.fetch_add(by, Ordering::SeqCst) + by
    }

    pub fn set(&self, at: Millis) {
        self.now.store(at, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> Millis {
        self.now.load(Ordering::SeqCst)
    }
}

/// Position of an instant inside the (local) week. Monday is weekday 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WeekTime {
    pub weekday: u8,
    pub minute_of_day: u16,
}

impl WeekTime {
    /// Slots `utc` after shifting it by `utc_offset_min` into local time.
    pub fn at(utc: Millis, utc_offset_min: i32) -> Self {
        let local = utc + utc_offset_min as Millis * MINUTE_MS;
        let days = local.div_euclid(DAY_MS);
        // 1970-01-01 was a Thursday.
        let weekday = (days + 3).rem_euclid(7) as u8;
        let minute_of_day = (local.rem_euclid(DAY_MS) / MINUTE_MS) as u16;
        Self {
            weekday,
            minute_of_day,
        }
    }

    pub fn quarter_of_day(self) -> u8 {
        (self.minute_of_day / 15) as u8
    }

    /// Index into a dense 10,080-slot power profile.
    pub fn power_slot(self) -> usize {
        self.weekday as usize * MINUTES_PER_DAY + self.minute_of_day as usize
    }

    /// Index into a dense 672-slot location profile.
    pub fn location_slot(self) -> usize {
        self.weekday as usize * QUARTERS_PER_DAY + self.quarter_of_day() as usize
    }
}
