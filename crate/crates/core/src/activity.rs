//! Ground-truth activity logs: focus spans, active seconds and sessions.
//!
//! An activity log is newline-delimited JSON:
//!
//! ```text
//! {"user_id":"u1","time_ms":1000,"kind":"tab_focus","url":"https://example.com/"}
//! {"user_id":"u1","time_ms":4200,"kind":"input"}
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::extract_domain;
use crate::timeline::{second_of, SecondGrid, SecondRuns};

/// Seconds an input or navigation keeps the browser active.
pub const ACTIVITY_WINDOW_S: i64 = 60;

/// Longest inactive stretch inside one browsing session, in seconds.
pub const SESSION_GAP_S: i64 = 20 * 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    TabFocus,
    WindowFocus,
    WindowBlur,
    Navigation,
    TabClose,
    WindowClose,
    /// Mouse, keyboard, scroll or click.
    Input,
    IdleStart,
    ScreenLock,
}

impl EventKind {
    fn requires_url(self) -> bool {
        matches!(self, EventKind::TabFocus | EventKind::Navigation)
    }

    fn ends_focus(self) -> bool {
        matches!(
            self,
            EventKind::WindowBlur
                | EventKind::TabClose
                | EventKind::WindowClose
                | EventKind::IdleStart
                | EventKind::ScreenLock
        )
    }

    fn counts_as_activity(self) -> bool {
        matches!(self, EventKind::Input | EventKind::Navigation)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityEvent {
    pub user_id: String,
    pub time_ms: i64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
}

impl ActivityEvent {
    pub fn new(user_id: &str, time_ms: i64, kind: EventKind, url: Option<&str>) -> Self {
        ActivityEvent {
            user_id: user_id.to_owned(),
            time_ms,
            kind,
            url: url.map(str::to_owned),
        }
    }
}

/// Parses an activity log, grouped by user and stably sorted by time.
pub fn parse_activity<R: BufRead>(reader: R) -> Result<BTreeMap<String, Vec<ActivityEvent>>> {
    let mut by_user: BTreeMap<String, Vec<ActivityEvent>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let parse_err = |message: String| Error::Parse {
            line: lineno,
            message,
        };
        let line = line.map_err(|e| parse_err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let event: ActivityEvent =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if event.time_ms < 0 {
            return Err(parse_err(format!("negative time_ms {}", event.time_ms)));
        }
        if event.kind.requires_url() && event.url.as_deref().is_none_or(str::is_empty) {
            return Err(parse_err(format!("{:?} event without url", event.kind)));
        }
        by_user
            .entry(event.user_id.clone())
            .or_default()
            .push(event);
    }
    for events in by_user.values_mut() {
        events.sort_by_key(|e| e.time_ms);
    }
    Ok(by_user)
}

pub fn write_activity<W: Write>(mut writer: W, events: &[ActivityEvent]) -> std::io::Result<()> {
    for event in events {
        serde_json::to_writer(&mut writer, event)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// A maximal interval of focused, non-idle time on one URL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivitySpan {
    pub user_id: String,
    pub url: String,
    pub domain: String,
    pub start_ms: i64,
    pub end_ms: i64,
}

impl ActivitySpan {
    /// Seconds covered by the span, `[second(start), second(end))`.
    pub fn seconds(&self) -> (i64, i64) {
        (second_of(self.start_ms), second_of(self.end_ms))
    }
}

struct OpenSpan {
    url: String,
    start_ms: i64,
}

/// Turns one user's time-sorted events into focus spans.
///
/// A span starts when a URL is visited or gains focus and ends on navigation
/// to a different URL, tab or window close, a tab or window switch, idle, or
/// screen lock. A span still open at the end of the log closes at the last
/// event time.
pub fn build_spans(events: &[ActivityEvent]) -> Vec<ActivitySpan> {
    let mut spans = Vec::new();
    let Some(first) = events.first() else {
        return spans;
    };
    let user_id = first.user_id.as_str();
    let mut current_url: Option<String> = None;
    let mut focused = false;
    let mut idle = false;
    let mut open: Option<OpenSpan> = None;

    let close = |open: &mut Option<OpenSpan>, spans: &mut Vec<ActivitySpan>, at: i64| {
        if let Some(span) = open.take() {
            if at > span.start_ms {
                spans.push(ActivitySpan {
                    user_id: user_id.to_owned(),
                    domain: extract_domain(&span.url),
                    url: span.url,
                    start_ms: span.start_ms,
                    end_ms: at,
                });
            }
        }
    };

    for event in events {
        let t = event.time_ms;
        if event.kind.ends_focus() && open.is_none() {
            log::debug!(
                "user {user_id}: {:?} at {t} with no open span, ignored",
                event.kind
            );
        }
        match event.kind {
            EventKind::TabFocus | EventKind::Navigation => {
                current_url = event.url.clone();
                focused = true;
                idle = false;
            }
            EventKind::WindowFocus => {
                if event.url.is_some() {
                    current_url = event.url.clone();
                }
                focused = true;
                idle = false;
            }
            EventKind::WindowBlur => focused = false,
            EventKind::TabClose => current_url = None,
            EventKind::WindowClose => {
                current_url = None;
                focused = false;
            }
            EventKind::Input => idle = false,
            EventKind::IdleStart | EventKind::ScreenLock => idle = true,
        }
        let desired = if focused && !idle {
            current_url.as_deref()
        } else {
            None
        };
        let keep = matches!((&open, desired), (Some(o), Some(d)) if o.url == d);
        if !keep {
            close(&mut open, &mut spans, t);
            if let Some(url) = desired {
                open = Some(OpenSpan {
                    url: url.to_owned(),
                    start_ms: t,
                });
            }
        }
    }
    let last = events.last().map_or(0, |e| e.time_ms);
    close(&mut open, &mut spans, last);
    spans
}

pub fn write_spans_csv<W: Write>(writer: W, spans: &[ActivitySpan]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["user_id", "url", "domain", "start_ms", "end_ms"])?;
    for span in spans {
        out.write_record([
            span.user_id.as_str(),
            &span.url,
            &span.domain,
            &span.start_ms.to_string(),
            &span.end_ms.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Ground-truth per-second activity.
///
/// Second `s` is active when it lies inside a span and an input or navigation
/// happened in `(s - 60, s]`. The grid starts at the first event or span
/// second and extends far enough to hold the session tail after the last
/// active second.
pub fn active_seconds(
    user_id: &str,
    spans: &[ActivitySpan],
    events: &[ActivityEvent],
) -> SecondGrid {
    let first = events
        .iter()
        .map(|e| second_of(e.time_ms))
        .chain(spans.iter().map(|s| s.seconds().0))
        .min();
    let Some(origin) = first else {
        return SecondGrid::new(user_id, 0, 0);
    };

    let recent = SecondRuns::from_runs(
        events
            .iter()
            .filter(|e| e.kind.counts_as_activity())
            .map(|e| {
                let s = second_of(e.time_ms);
                (s, s + ACTIVITY_WINDOW_S)
            })
            .collect(),
    );

    let mut painted: Vec<(SecondRuns, &str)> = Vec::with_capacity(spans.len());
    let mut last_active = None;
    for span in spans {
        let (a, b) = span.seconds();
        let active = recent.clip(a, b);
        if let Some(&(_, end)) = active.runs().last() {
            last_active = Some(last_active.map_or(end - 1, |l: i64| l.max(end - 1)));
        }
        painted.push((active, span.domain.as_str()));
    }

    let last_event = events
        .iter()
        .map(|e| second_of(e.time_ms))
        .chain(spans.iter().map(|s| s.seconds().1))
        .max()
        .unwrap_or(origin);
    let mut end = last_event + 1;
    if let Some(l) = last_active {
        end = end.max(l + SESSION_GAP_S + 1);
    }

    let mut grid = SecondGrid::new(user_id, origin, (end - origin) as usize);
    for (runs, domain) in &painted {
        for &(a, b) in runs.runs() {
            grid.fill(a, b, Some(domain));
        }
    }
    grid
}

/// A browsing session, `[start, end]` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub start: i64,
    pub end: i64,
}

impl Session {
    pub fn len(&self) -> u64 {
        (self.end - self.start + 1) as u64
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, s: i64) -> bool {
        self.start <= s && s <= self.end
    }
}

/// Groups active seconds into sessions: active seconds separated by at most
/// `gap_s` inactive seconds share a session, and every session runs until
/// `gap_s` seconds after its last active second.
pub fn sessions(grid: &SecondGrid, gap_s: i64) -> Vec<Session> {
    sessions_from_runs(&grid.active_runs(), gap_s)
}

pub fn sessions_from_runs(active: &SecondRuns, gap_s: i64) -> Vec<Session> {
    let mut out: Vec<Session> = Vec::new();
    let mut current: Option<(i64, i64)> = None;
    for &(a, b) in active.runs() {
        let last = b - 1;
        current = match current {
            Some((start, prev_last)) if a - prev_last - 1 <= gap_s => Some((start, last)),
            Some((start, prev_last)) => {
                out.push(Session {
                    start,
                    end: prev_last + gap_s,
                });
                Some((a, last))
            }
            None => Some((a, last)),
        };
    }
    if let Some((start, last)) = current {
        out.push(Session {
            start,
            end: last + gap_s,
        });
    }
    out
}

/// In-session seconds as half-open runs.
pub fn session_runs(sessions: &[Session]) -> SecondRuns {
    SecondRuns::from_runs(sessions.iter().map(|s| (s.start, s.end + 1)).collect())
}
