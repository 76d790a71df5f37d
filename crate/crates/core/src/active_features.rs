//! Features for the browser-active classifier.
//!
//! Row layout (48 columns):
//!
//! | columns | content |
//! |---------|---------|
//! | 0 | log seconds between the previous and next history event |
//! | 1 | log seconds since the previous event |
//! | 2 | log seconds until the next event |
//! | 3..23 | one-hot vocabulary index of the previous event's domain |
//! | 23..43 | one-hot vocabulary index of the next event's domain |
//! | 43..48 | one-hot productivity level of the previous event's domain |
//!
//! A history event at the query second counts as the previous event. Missing
//! events use [`MISSING_DURATION_S`](crate::features::MISSING_DURATION_S).

use crate::features::{log_duration, missing_log_duration, one_hot, Monotone};
use crate::history::{
    DomainVocabulary, ProductivityLevel, ProductivityMap, UserHistory, VOCABULARY_SIZE,
};
use crate::timeline::SecondGrid;

pub const ACTIVE_WIDTH: usize = 3 + 2 * VOCABULARY_SIZE + 5;

const PREV_OFFSET: usize = 3;
const NEXT_OFFSET: usize = PREV_OFFSET + VOCABULARY_SIZE;
const PRODUCTIVITY_OFFSET: usize = NEXT_OFFSET + VOCABULARY_SIZE;

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveFeatureRow {
    pub log_gap_prev_next: f64,
    pub log_since_prev: f64,
    pub log_until_next: f64,
    /// Vocabulary index; `None` for OTHER or no previous event.
    pub prev_domain: Option<usize>,
    pub next_domain: Option<usize>,
    pub productivity: ProductivityLevel,
}

impl ActiveFeatureRow {
    pub fn encode_into(&self, out: &mut [f64]) {
        assert_eq!(out.len(), ACTIVE_WIDTH);
        out[0] = self.log_gap_prev_next;
        out[1] = self.log_since_prev;
        out[2] = self.log_until_next;
        one_hot(&mut out[PREV_OFFSET..NEXT_OFFSET], self.prev_domain);
        one_hot(&mut out[NEXT_OFFSET..PRODUCTIVITY_OFFSET], self.next_domain);
        one_hot(
            &mut out[PRODUCTIVITY_OFFSET..ACTIVE_WIDTH],
            Some(self.productivity.index()),
        );
    }

    pub fn encode(&self) -> Vec<f64> {
        let mut out = vec![0.0; ACTIVE_WIDTH];
        self.encode_into(&mut out);
        out
    }
}

pub fn active_feature_names() -> Vec<String> {
    let mut names = vec![
        "log_gap_prev_next".to_owned(),
        "log_since_prev".to_owned(),
        "log_until_next".to_owned(),
    ];
    names.extend((0..VOCABULARY_SIZE).map(|i| format!("prev_domain_{i:02}")));
    names.extend((0..VOCABULARY_SIZE).map(|i| format!("next_domain_{i:02}")));
    names.extend(
        ProductivityLevel::ALL
            .iter()
            .map(|l| format!("productivity_{}", l.token())),
    );
    names
}

/// Everything about the neighbouring history events that stays fixed while
/// the query second moves between two consecutive event seconds.
#[derive(Debug, Clone)]
pub struct ActiveGap {
    prev_second: Option<i64>,
    next_second: Option<i64>,
    log_gap: f64,
    prev_domain: Option<usize>,
    next_domain: Option<usize>,
    productivity: ProductivityLevel,
}

impl ActiveGap {
    pub fn at(
        s: i64,
        history: &UserHistory,
        vocab: &DomainVocabulary,
        productivity: &ProductivityMap,
    ) -> Self {
        let prev = history.last_at_or_before(s);
        let next = history.first_after(s);
        let prev_second = prev.map(|i| history.second(i));
        let next_second = next.map(|i| history.second(i));
        let log_gap = match (prev_second, next_second) {
            (Some(p), Some(n)) => log_duration(n - p),
            _ => missing_log_duration(),
        };
        ActiveGap {
            prev_second,
            next_second,
            log_gap,
            prev_domain: prev.and_then(|i| vocab.index_of(history.domain(i))),
            next_domain: next.and_then(|i| vocab.index_of(history.domain(i))),
            productivity: prev.map_or(ProductivityLevel::Neutral, |i| {
                productivity.lookup(history.domain(i))
            }),
        }
    }

    fn log_since(&self, s: i64) -> f64 {
        self.prev_second
            .map_or_else(missing_log_duration, |p| log_duration(s - p))
    }

    fn log_until(&self, s: i64) -> f64 {
        self.next_second
            .map_or_else(missing_log_duration, |n| log_duration(n - s))
    }

    pub fn row(&self, s: i64) -> ActiveFeatureRow {
        ActiveFeatureRow {
            log_gap_prev_next: self.log_gap,
            log_since_prev: self.log_since(s),
            log_until_next: self.log_until(s),
            prev_domain: self.prev_domain,
            next_domain: self.next_domain,
            productivity: self.productivity,
        }
    }

    /// Base encoding; only columns 1 and 2 depend on the query second.
    pub fn encode(&self, s: i64) -> Vec<f64> {
        self.row(s).encode()
    }

    /// Value of column `j` at second `s`, for `s` inside this gap.
    pub fn value(&self, base: &[f64], j: usize, s: i64) -> f64 {
        match j {
            1 => self.log_since(s),
            2 => self.log_until(s),
            _ => base[j],
        }
    }

    pub fn shape(&self) -> Vec<Monotone> {
        let mut shape = vec![Monotone::Constant; ACTIVE_WIDTH];
        if self.prev_second.is_some() {
            shape[1] = Monotone::Increasing;
        }
        if self.next_second.is_some() {
            shape[2] = Monotone::Decreasing;
        }
        shape
    }
}

pub fn featurize_active(
    s: i64,
    history: &UserHistory,
    vocab: &DomainVocabulary,
    productivity: &ProductivityMap,
) -> ActiveFeatureRow {
    ActiveGap::at(s, history, vocab, productivity).row(s)
}

pub fn label_active(s: i64, grid: &SecondGrid) -> bool {
    grid.is_active(s)
}
