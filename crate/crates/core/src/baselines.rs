//! Heuristic comparators for both reconstruction tasks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::UserHistory;
use crate::metrics::{BinaryCounts, BinaryMetrics};
use crate::timeline::{SecondGrid, SecondRuns};

/// Thresholds tried by [`sweep_threshold`], in minutes.
pub const THRESHOLD_MINUTES: std::ops::RangeInclusive<u32> = 1..=10;

/// Constant per-user activity guess: `true` (always active in session) when
/// that is at least as accurate as always inactive over `window`.
pub fn majority_activity_baseline(truth: &SecondGrid, window: &SecondRuns) -> bool {
    let total = window.count();
    let active = window
        .runs()
        .iter()
        .map(|&(a, b)| (a..b).filter(|&s| truth.is_active(s)).count() as u64)
        .sum::<u64>();
    2 * active >= total
}

/// Seconds within `minutes` after any history event: `s` is active when some
/// event second `e` satisfies `s - 60 * minutes < e <= s`.
pub fn threshold_active_baseline(history: &UserHistory, minutes: u32) -> SecondRuns {
    let width = 60 * i64::from(minutes);
    let mut runs = SecondRuns::new();
    for &e in history.seconds() {
        runs.push(e, e + width);
    }
    runs
}

/// Data for calibrating the activity threshold on one user.
pub struct SweepUser<'a> {
    pub history: &'a UserHistory,
    pub truth: &'a SecondRuns,
    pub in_session: &'a SecondRuns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub best_minutes: u32,
    pub by_minutes: BTreeMap<u32, BinaryMetrics>,
}

/// Threshold in 1..=10 minutes with the best pooled in-session F1; ties go to
/// the smaller threshold.
pub fn sweep_threshold(users: &[SweepUser<'_>]) -> SweepResult {
    let mut by_minutes = BTreeMap::new();
    let mut best: Option<(u32, f64)> = None;
    for m in THRESHOLD_MINUTES {
        let mut counts = BinaryCounts::default();
        for u in users {
            let predicted = threshold_active_baseline(u.history, m);
            counts += BinaryCounts::from_runs(&predicted, u.truth, u.in_session);
        }
        let metrics = counts.metrics();
        if best.is_none_or(|(_, f1)| metrics.f1 > f1) {
            best = Some((m, metrics.f1));
        }
        by_minutes.insert(m, metrics);
    }
    SweepResult {
        best_minutes: best.map_or(*THRESHOLD_MINUTES.start(), |b| b.0),
        by_minutes,
    }
}

/// Domain of the latest history visit at or before `s`.
pub fn most_recent_domain_baseline(s: i64, history: &UserHistory) -> Result<&str> {
    history
        .last_at_or_before(s)
        .map(|i| history.domain(i))
        .ok_or(Error::NoPrecedingVisit(s))
}

/// The domain with the most truth-active seconds inside `window` (the whole
/// grid when `None`); ties go to the lexicographically smaller domain.
pub fn top_domain_baseline(truth: &SecondGrid, window: Option<&SecondRuns>) -> Option<String> {
    let mut time: BTreeMap<&str, u64> = BTreeMap::new();
    for (s, domain) in truth.active() {
        if window.is_none_or(|w| w.contains(s)) {
            *time.entry(domain).or_default() += 1;
        }
    }
    // BTreeMap iterates in ascending order, so the first maximum wins ties.
    let mut best: Option<(&str, u64)> = None;
    for (d, t) in time {
        if best.is_none_or(|(_, bt)| t > bt) {
            best = Some((d, t));
        }
    }
    best.map(|(d, _)| d.to_owned())
}
