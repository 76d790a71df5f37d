//! Candidate domains and features for the focused-domain classifier.
//!
//! At a query second the classifier picks one of four candidates taken from
//! the history around it:
//!
//! - **C**: domain of the latest visit at or before the second,
//! - **N**: domain of the first visit after it,
//! - **P1**: latest earlier domain different from C,
//! - **P2**: latest earlier domain different from both C and P1.
//!
//! Row layout (97 columns):
//!
//! | columns | content |
//! |---------|---------|
//! | 0 | log seconds between t(C) and t(N) |
//! | 1 | log seconds since t(C) |
//! | 2 | log seconds until t(N) |
//! | 3, 4 | log seconds since t(P1), t(P2) |
//! | 5, 6 | visits since t(P1), t(P2) |
//! | 7..11 | switches into N, C, P1, P2 over the last 20 minutes |
//! | 11..14 | N's referrer is the C, P1, P2 visit |
//! | 14..94 | one-hot vocabulary index of C, N, P1, P2 (20 each) |
//! | 94..97 | N equals C, P1, P2 |
//!
//! A switch into X is a consecutive visit pair, both inside `[s - 1200, s]`,
//! whose later visit is on X and whose earlier visit is on another domain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{flag, log_duration, missing_log_duration, one_hot, Monotone};
use crate::history::{DomainVocabulary, UserHistory, VOCABULARY_SIZE};

pub const DOMAIN_WIDTH: usize = 7 + 4 + 3 + 4 * VOCABULARY_SIZE + 3;

/// Trailing window for the switch counts, in seconds.
pub const SWITCH_WINDOW_S: i64 = 20 * 60;

const ONE_HOT_OFFSET: usize = 14;
const OVERLAP_OFFSET: usize = ONE_HOT_OFFSET + 4 * VOCABULARY_SIZE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DomainClass {
    #[serde(rename = "C")]
    Current,
    #[serde(rename = "N")]
    Next,
    #[serde(rename = "P1")]
    Past1,
    #[serde(rename = "P2")]
    Past2,
}

impl DomainClass {
    /// Ordered by how often each class is the right answer.
    pub const ALL: [DomainClass; 4] = [
        DomainClass::Current,
        DomainClass::Next,
        DomainClass::Past1,
        DomainClass::Past2,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn name(self) -> &'static str {
        match self {
            DomainClass::Current => "C",
            DomainClass::Next => "N",
            DomainClass::Past1 => "P1",
            DomainClass::Past2 => "P2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub domain: String,
    pub second: i64,
    /// Position in the user's sorted, filtered history.
    pub visit_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub current: Candidate,
    pub next: Option<Candidate>,
    pub past1: Option<Candidate>,
    pub past2: Option<Candidate>,
    pub visits_since_past1: u32,
    pub visits_since_past2: u32,
    pub next_refers_current: bool,
    pub next_refers_past1: bool,
    pub next_refers_past2: bool,
}

impl CandidateSet {
    pub fn get(&self, class: DomainClass) -> Option<&Candidate> {
        match class {
            DomainClass::Current => Some(&self.current),
            DomainClass::Next => self.next.as_ref(),
            DomainClass::Past1 => self.past1.as_ref(),
            DomainClass::Past2 => self.past2.as_ref(),
        }
    }

    /// Domain for a predicted class, falling back to C when that candidate
    /// does not exist.
    pub fn domain_for(&self, class: DomainClass) -> &str {
        self.get(class)
            .map_or(self.current.domain.as_str(), |c| c.domain.as_str())
    }
}

fn candidate(history: &UserHistory, i: usize) -> Candidate {
    Candidate {
        domain: history.domain(i).to_owned(),
        second: history.second(i),
        visit_index: i,
    }
}

pub fn candidates(s: i64, history: &UserHistory) -> Result<CandidateSet> {
    let c = history
        .last_at_or_before(s)
        .ok_or(Error::NoPrecedingVisit(s))?;
    let n = history.first_after(s);
    let p1 = history.prev_other(c);
    let p2 = p1.and_then(|p1| {
        let excluded = [history.domain_id(c), history.domain_id(p1)];
        let mut j = history.prev_other(p1);
        while let Some(k) = j {
            if !excluded.contains(&history.domain_id(k)) {
                break;
            }
            j = history.prev_other(k);
        }
        j
    });
    let referrer = n.and_then(|n| history.visit(n).referring_visit_id);
    let refers = |i: Option<usize>| match (referrer, i) {
        (Some(r), Some(i)) => history.visit(i).visit_id == r,
        _ => false,
    };
    Ok(CandidateSet {
        current: candidate(history, c),
        next: n.map(|i| candidate(history, i)),
        past1: p1.map(|i| candidate(history, i)),
        past2: p2.map(|i| candidate(history, i)),
        visits_since_past1: p1.map_or(0, |p| (c - p) as u32),
        visits_since_past2: p2.map_or(0, |p| (c - p) as u32),
        next_refers_current: refers(Some(c)),
        next_refers_past1: refers(p1),
        next_refers_past2: refers(p2),
    })
}

/// First candidate, in C, N, P1, P2 order, whose domain is the true domain.
/// `None` means the second cannot be explained by any candidate.
pub fn label_domain(truth: &str, set: &CandidateSet) -> Option<DomainClass> {
    DomainClass::ALL
        .into_iter()
        .find(|&class| set.get(class).is_some_and(|c| c.domain == truth))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainFeatureRow {
    pub log_gap_current_next: f64,
    pub log_since_current: f64,
    pub log_until_next: f64,
    pub log_since_past1: f64,
    pub log_since_past2: f64,
    pub visits_since_past1: u32,
    pub visits_since_past2: u32,
    /// Switch counts for N, C, P1, P2.
    pub switches_into: [u32; 4],
    pub next_refers: [bool; 3],
    /// Vocabulary indices for C, N, P1, P2.
    pub vocab_index: [Option<usize>; 4],
    /// N equals C, P1, P2.
    pub next_equals: [bool; 3],
}

impl DomainFeatureRow {
    pub fn encode_into(&self, out: &mut [f64]) {
        assert_eq!(out.len(), DOMAIN_WIDTH);
        out[0] = self.log_gap_current_next;
        out[1] = self.log_since_current;
        out[2] = self.log_until_next;
        out[3] = self.log_since_past1;
        out[4] = self.log_since_past2;
        out[5] = f64::from(self.visits_since_past1);
        out[6] = f64::from(self.visits_since_past2);
        for (k, &count) in self.switches_into.iter().enumerate() {
            out[7 + k] = f64::from(count);
        }
        for (k, &b) in self.next_refers.iter().enumerate() {
            out[11 + k] = flag(b);
        }
        for (k, &idx) in self.vocab_index.iter().enumerate() {
            let start = ONE_HOT_OFFSET + k * VOCABULARY_SIZE;
            one_hot(&mut out[start..start + VOCABULARY_SIZE], idx);
        }
        for (k, &b) in self.next_equals.iter().enumerate() {
            out[OVERLAP_OFFSET + k] = flag(b);
        }
    }

    pub fn encode(&self) -> Vec<f64> {
        let mut out = vec![0.0; DOMAIN_WIDTH];
        self.encode_into(&mut out);
        out
    }
}

pub fn domain_feature_names() -> Vec<String> {
    let mut names: Vec<String> = [
        "log_gap_c_n",
        "log_since_c",
        "log_until_n",
        "log_since_p1",
        "log_since_p2",
        "visits_since_p1",
        "visits_since_p2",
        "switches_into_n",
        "switches_into_c",
        "switches_into_p1",
        "switches_into_p2",
        "n_refers_c",
        "n_refers_p1",
        "n_refers_p2",
    ]
    .iter()
    .map(|s| (*s).to_owned())
    .collect();
    for prefix in ["c", "n", "p1", "p2"] {
        names.extend((0..VOCABULARY_SIZE).map(|i| format!("{prefix}_domain_{i:02}")));
    }
    names.extend(
        ["n_is_c", "n_is_p1", "n_is_p2"]
            .iter()
            .map(|s| (*s).to_owned()),
    );
    names
}

/// Per-gap context for the domain features: the candidates stay fixed while
/// the query second moves between `t(C)` and `t(N)`.
#[derive(Debug, Clone)]
pub struct DomainGap {
    set: CandidateSet,
    // (second of the earlier visit, which of N, C, P1, P2 the later visit is on)
    switches: Vec<(i64, [bool; 4])>,
    vocab_index: [Option<usize>; 4],
}

impl DomainGap {
    pub fn new(set: CandidateSet, history: &UserHistory, vocab: &DomainVocabulary) -> Self {
        let c = set.current.visit_index;
        let ids = [
            set.next.as_ref().map(|x| history.domain_id(x.visit_index)),
            Some(history.domain_id(c)),
            set.past1.as_ref().map(|x| history.domain_id(x.visit_index)),
            set.past2.as_ref().map(|x| history.domain_id(x.visit_index)),
        ];
        // Any pair that can fall inside the window for some second in this gap.
        let lo = history.first_at_or_after(set.current.second - SWITCH_WINDOW_S);
        let switches = (lo + 1..=c)
            .filter(|&i| history.domain_id(i) != history.domain_id(i - 1))
            .map(|i| {
                let d = history.domain_id(i);
                (history.second(i - 1), ids.map(|id| id == Some(d)))
            })
            .filter(|(_, hits)| hits.iter().any(|&h| h))
            .collect();
        let vocab_index = [
            vocab.index_of(&set.current.domain),
            set.next.as_ref().and_then(|x| vocab.index_of(&x.domain)),
            set.past1.as_ref().and_then(|x| vocab.index_of(&x.domain)),
            set.past2.as_ref().and_then(|x| vocab.index_of(&x.domain)),
        ];
        DomainGap {
            set,
            switches,
            vocab_index,
        }
    }

    pub fn candidates(&self) -> &CandidateSet {
        &self.set
    }

    fn since(c: Option<&Candidate>, s: i64) -> f64 {
        c.map_or_else(missing_log_duration, |c| log_duration(s - c.second))
    }

    fn switch_count(&self, slot: usize, s: i64) -> u32 {
        let from = s - SWITCH_WINDOW_S;
        self.switches
            .iter()
            .filter(|(earlier, hits)| *earlier >= from && hits[slot])
            .count() as u32
    }

    pub fn row(&self, s: i64) -> DomainFeatureRow {
        let set = &self.set;
        let next_domain = set.next.as_ref().map(|n| n.domain.as_str());
        let equals = |c: Option<&Candidate>| match (next_domain, c) {
            (Some(n), Some(c)) => n == c.domain,
            _ => false,
        };
        DomainFeatureRow {
            log_gap_current_next: set.next.as_ref().map_or_else(missing_log_duration, |n| {
                log_duration(n.second - set.current.second)
            }),
            log_since_current: log_duration(s - set.current.second),
            log_until_next: set
                .next
                .as_ref()
                .map_or_else(missing_log_duration, |n| log_duration(n.second - s)),
            log_since_past1: Self::since(set.past1.as_ref(), s),
            log_since_past2: Self::since(set.past2.as_ref(), s),
            visits_since_past1: set.visits_since_past1,
            visits_since_past2: set.visits_since_past2,
            switches_into: [0, 1, 2, 3].map(|slot| self.switch_count(slot, s)),
            next_refers: [
                set.next_refers_current,
                set.next_refers_past1,
                set.next_refers_past2,
            ],
            vocab_index: self.vocab_index,
            next_equals: [
                equals(Some(&set.current)),
                equals(set.past1.as_ref()),
                equals(set.past2.as_ref()),
            ],
        }
    }

    pub fn encode(&self, s: i64) -> Vec<f64> {
        self.row(s).encode()
    }

    /// Value of column `j` at second `s`, for `s` inside this gap.
    pub fn value(&self, base: &[f64], j: usize, s: i64) -> f64 {
        let set = &self.set;
        match j {
            1 => log_duration(s - set.current.second),
            2 => set
                .next
                .as_ref()
                .map_or_else(missing_log_duration, |n| log_duration(n.second - s)),
            3 => Self::since(set.past1.as_ref(), s),
            4 => Self::since(set.past2.as_ref(), s),
            7..=10 => f64::from(self.switch_count(j - 7, s)),
            _ => base[j],
        }
    }

    pub fn shape(&self) -> Vec<Monotone> {
        let mut shape = vec![Monotone::Constant; DOMAIN_WIDTH];
        shape[1] = Monotone::Increasing;
        if self.set.next.is_some() {
            shape[2] = Monotone::Decreasing;
        }
        if self.set.past1.is_some() {
            shape[3] = Monotone::Increasing;
        }
        if self.set.past2.is_some() {
            shape[4] = Monotone::Increasing;
        }
        if !self.switches.is_empty() {
            for slot in &mut shape[7..11] {
                *slot = Monotone::Decreasing;
            }
        }
        shape
    }
}

pub fn featurize_domain(
    s: i64,
    history: &UserHistory,
    set: &CandidateSet,
    vocab: &DomainVocabulary,
) -> DomainFeatureRow {
    DomainGap::new(set.clone(), history, vocab).row(s)
}
