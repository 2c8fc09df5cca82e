//! ISO 8601 timestamps on the command line, always read as UTC.

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use tbasic_core::time::Period;

use crate::failure::{Failure, Outcome};

/// Epoch seconds of an ISO 8601 date or date-time. Offsets are honoured;
/// values without one are UTC.
pub fn parse(s: &str) -> Outcome<i64> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t.and_utc().timestamp());
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d
            .and_hms_opt(0, 0, 0)
            .expect("midnight exists")
            .and_utc()
            .timestamp());
    }
    Err(Failure::input(format!(
        "{s:?} is not an ISO 8601 date or date-time"
    )))
}

pub fn period(from: &str, to: &str) -> Outcome<Period> {
    let (a, b) = (parse(from)?, parse(to)?);
    Period::new(a, b).map_err(|_| Failure::input(format!("period {from} .. {to} is empty")))
}

pub fn format(ts: i64) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .map(|t| t.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| ts.to_string())
}
