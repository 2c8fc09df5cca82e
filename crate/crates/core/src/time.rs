//! Epoch-second periods and UTC time-of-day helpers.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const SECONDS_PER_HOUR: i64 = 3_600;
pub const SECONDS_PER_DAY: i64 = 86_400;

/// Half-open interval `[start, end)` of epoch seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Period {
    pub start: i64,
    pub end: i64,
}

impl Period {
    pub fn new(start: i64, end: i64) -> Result<Self> {
        if end <= start {
            return Err(Error::EmptyPeriod { start, end });
        }
        Ok(Period { start, end })
    }

    /// A period that accepts every non-negative timestamp.
    pub fn unbounded() -> Self {
        Period {
            start: 0,
            end: i64::MAX,
        }
    }

    pub fn contains(&self, ts: i64) -> bool {
        ts >= self.start && ts < self.end
    }

    pub fn span_seconds(&self) -> i64 {
        self.end - self.start
    }

    pub fn overlaps(&self, other: &Period) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Hours since UTC midnight, in `[0, 24)`.
pub fn hour_of_day(ts: i64) -> f64 {
    ts.rem_euclid(SECONDS_PER_DAY) as f64 / SECONDS_PER_HOUR as f64
}

/// Maps continuous simulation hours onto a time of day, given the time of day
/// at which the simulation clock started.
pub fn clock_time_of_day(clock_origin: f64, hours: f64) -> f64 {
    let tod = (clock_origin + hours).rem_euclid(24.0);
    // rem_euclid can round up to exactly 24.0 for tiny negative inputs
    if tod >= 24.0 {
        0.0
    } else {
        tod
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hour_of_day_utc() {
        // 2009-12-01T00:00:00Z
        assert_eq!(hour_of_day(1_259_625_600), 0.0);
        assert_eq!(hour_of_day(1_259_625_600 + 17 * 3600 + 1800), 17.5);
    }

    #[test]
    fn clock_wraps() {
        assert_eq!(clock_time_of_day(22.0, 3.0), 1.0);
        assert_eq!(clock_time_of_day(0.0, 48.0), 0.0);
        assert!(clock_time_of_day(0.0, -1e-18) < 24.0);
    }

    #[test]
    fn empty_period_rejected() {
        assert!(Period::new(5, 5).is_err());
        assert!(Period::new(5, 6).unwrap().contains(5));
        assert!(!Period::new(5, 6).unwrap().contains(6));
    }
}
