//! Shared encoding rules for the feature builders.

/// Stand-in duration, in seconds, for a missing previous or next event.
pub const MISSING_DURATION_S: i64 = 86_400;

/// Natural log of a duration in seconds, floored at one second.
pub fn log_duration(seconds: i64) -> f64 {
    (seconds.max(1) as f64).ln()
}

/// `log_duration` of the missing-event sentinel.
pub fn missing_log_duration() -> f64 {
    log_duration(MISSING_DURATION_S)
}

/// How a feature changes as the query second advances through a gap between
/// two history events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotone {
    Constant,
    Increasing,
    Decreasing,
}

pub(crate) fn one_hot(out: &mut [f64], index: Option<usize>) {
    out.fill(0.0);
    if let Some(i) = index {
        out[i] = 1.0;
    }
}

pub(crate) fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}
