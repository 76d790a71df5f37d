//! Labeled users, training matrices and model fitting.

use serde::{Deserialize, Serialize};

use crate::active_features::{ActiveGap, ACTIVE_WIDTH};
use crate::activity::{
    active_seconds, build_spans, session_runs, sessions, ActivityEvent, SESSION_GAP_S,
};
use crate::baselines::{sweep_threshold, SweepResult, SweepUser};
use crate::dataset::{sample_positions, Dataset, RowKey};
use crate::domain_features::{
    candidates, label_domain, CandidateSet, DomainClass, DomainGap, DOMAIN_WIDTH,
};
use crate::error::{Error, Result};
use crate::forest::{Forest, ForestParams};
use crate::history::{
    compute_top_domains, DomainVocabulary, HistoryVisit, ProductivityMap, UserHistory,
    VOCABULARY_SIZE,
};
use crate::timeline::{SecondGrid, SecondRuns};

/// One user's history with the ground truth derived from their activity log.
#[derive(Debug, Clone)]
pub struct LabeledUser {
    pub history: UserHistory,
    pub truth: SecondGrid,
    pub sessions: SecondRuns,
}

impl LabeledUser {
    pub fn from_logs(user_id: &str, visits: Vec<HistoryVisit>, events: &[ActivityEvent]) -> Self {
        let history = UserHistory::new(user_id, visits);
        let spans = build_spans(events);
        let truth = active_seconds(user_id, &spans, events);
        let sessions = session_runs(&sessions(&truth, SESSION_GAP_S));
        LabeledUser {
            history,
            truth,
            sessions,
        }
    }

    pub fn user_id(&self) -> &str {
        self.history.user_id()
    }
}

/// Caps a training matrix at `max_rows` rows drawn uniformly with `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowSample {
    pub max_rows: usize,
    pub seed: u64,
}

fn sorted_users(users: &[LabeledUser]) -> Vec<&LabeledUser> {
    let mut sorted: Vec<&LabeledUser> = users.iter().collect();
    sorted.sort_by(|a, b| a.user_id().cmp(b.user_id()));
    sorted
}

fn positions(total: usize, sample: Option<RowSample>) -> Vec<usize> {
    match sample {
        Some(s) => sample_positions(total, s.max_rows, s.seed),
        None => (0..total).collect(),
    }
}

/// Every in-session second as `(user, gap piece)` ranges, in row order.
fn active_pieces<'a>(users: &[&'a LabeledUser]) -> Vec<(&'a LabeledUser, i64, i64)> {
    let mut out = Vec::new();
    for &u in users {
        for &(a, b) in u.sessions.runs() {
            for (lo, hi) in u.history.gaps(a, b) {
                out.push((u, lo, hi));
            }
        }
    }
    out
}

/// Number of rows [`build_active_dataset`] produces before sampling.
pub fn count_active_rows(users: &[LabeledUser]) -> u64 {
    users.iter().map(|u| u.sessions.count()).sum()
}

/// One row per in-session second, ordered by user id then second. Label 1
/// marks an active second.
pub fn build_active_dataset(
    users: &[LabeledUser],
    vocabulary: &DomainVocabulary,
    productivity: &ProductivityMap,
    sample: Option<RowSample>,
) -> Result<Dataset> {
    let sorted = sorted_users(users);
    let pieces = active_pieces(&sorted);
    let total: usize = pieces.iter().map(|&(_, a, b)| (b - a) as usize).sum();
    let wanted = positions(total, sample);
    let mut data = Dataset::new(ACTIVE_WIDTH);
    let mut next = wanted.iter().copied().peekable();
    let mut offset = 0usize;
    for (u, lo, hi) in pieces {
        let len = (hi - lo) as usize;
        if next.peek().is_some_and(|&p| p < offset + len) {
            let gap = ActiveGap::at(lo, &u.history, vocabulary, productivity);
            while let Some(p) = next.next_if(|&p| p < offset + len) {
                let s = lo + (p - offset) as i64;
                let label = usize::from(u.truth.is_active(s));
                data.push(
                    &gap.encode(s),
                    label,
                    RowKey {
                        user_id: u.user_id().to_owned(),
                        second: s,
                    },
                )?;
            }
        }
        offset += len;
    }
    Ok(data)
}

type LabelRun = (i64, i64, usize, Option<DomainClass>);

/// Truth-active seconds with a defined candidate set, as runs of constant
/// candidate set and label: `(start, end, index of C, label)`.
fn domain_label_runs(user: &LabeledUser) -> Result<Vec<LabelRun>> {
    let h = &user.history;
    let mut out: Vec<LabelRun> = Vec::new();
    let Some(&first) = h.seconds().first() else {
        return Ok(out);
    };
    let mut cached: Option<(usize, CandidateSet)> = None;
    for (a, b) in user
        .truth
        .active_runs()
        .clip(first, i64::MAX)
        .runs()
        .iter()
        .copied()
    {
        for (lo, hi) in h.gaps(a, b) {
            let current = h.last_at_or_before(lo).expect("clipped to the first visit");
            if cached.as_ref().is_none_or(|(i, _)| *i != current) {
                cached = Some((current, candidates(lo, h)?));
            }
            let set = &cached.as_ref().expect("just filled").1;
            for s in lo..hi {
                let truth = user.truth.domain_at(s).expect("active second");
                let label = label_domain(truth, set);
                match out.last_mut() {
                    Some(last) if last.1 == s && last.2 == current && last.3 == label => {
                        last.1 = s + 1
                    }
                    _ => out.push((s, s + 1, current, label)),
                }
            }
        }
    }
    Ok(out)
}

/// Per-class counts of truth-active seconds; index 4 counts seconds whose
/// domain matches no candidate (including seconds before the first visit).
pub fn domain_label_counts(users: &[LabeledUser]) -> Result<[u64; 5]> {
    let mut counts = [0u64; 5];
    for u in users {
        let runs = domain_label_runs(u)?;
        let covered: u64 = runs.iter().map(|r| (r.1 - r.0) as u64).sum();
        counts[4] += u.truth.active_count() - covered;
        for (a, b, _, label) in runs {
            counts[label.map_or(4, DomainClass::index)] += (b - a) as u64;
        }
    }
    Ok(counts)
}

/// One row per truth-active second whose domain is among the candidates,
/// ordered by user id then second; the label is the class index.
pub fn build_domain_dataset(
    users: &[LabeledUser],
    vocabulary: &DomainVocabulary,
    sample: Option<RowSample>,
) -> Result<Dataset> {
    let sorted = sorted_users(users);
    let mut per_user = Vec::with_capacity(sorted.len());
    for &u in &sorted {
        let runs: Vec<_> = domain_label_runs(u)?
            .into_iter()
            .filter_map(|(a, b, c, label)| label.map(|l| (a, b, c, l)))
            .collect();
        per_user.push((u, runs));
    }
    let total: usize = per_user
        .iter()
        .flat_map(|(_, runs)| runs.iter().map(|r| (r.1 - r.0) as usize))
        .sum();
    let wanted = positions(total, sample);
    let mut data = Dataset::new(DOMAIN_WIDTH);
    let mut next = wanted.iter().copied().peekable();
    let mut offset = 0usize;
    for (u, runs) in per_user {
        let mut cached: Option<(usize, DomainGap)> = None;
        for (lo, hi, current, label) in runs {
            let len = (hi - lo) as usize;
            while let Some(p) = next.next_if(|&p| p < offset + len) {
                let s = lo + (p - offset) as i64;
                if cached.as_ref().is_none_or(|(i, _)| *i != current) {
                    let set = candidates(s, &u.history)?;
                    cached = Some((current, DomainGap::new(set, &u.history, vocabulary)));
                }
                let gap = &cached.as_ref().expect("just filled").1;
                data.push(
                    &gap.encode(s),
                    label.index(),
                    RowKey {
                        user_id: u.user_id().to_owned(),
                        second: s,
                    },
                )?;
            }
            offset += len;
        }
    }
    Ok(data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    /// Cap on rows per training matrix.
    pub max_rows: usize,
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_rows_per_leaf: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let forest = ForestParams::default();
        TrainConfig {
            seed: 0,
            max_rows: 200_000,
            n_trees: forest.n_trees,
            max_depth: forest.max_depth,
            min_rows_per_leaf: forest.min_rows_per_leaf,
        }
    }
}

impl TrainConfig {
    fn params(&self, seed: u64) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees,
            max_depth: self.max_depth,
            min_rows_per_leaf: self.min_rows_per_leaf,
            seed,
            ..ForestParams::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub users: Vec<String>,
    pub vocabulary_fingerprint: String,
    pub threshold_minutes: u32,
    pub active_rows_available: u64,
    pub active_rows_used: u64,
    /// inactive, active
    pub active_class_counts: [u64; 2],
    pub domain_rows_available: u64,
    pub domain_rows_used: u64,
    /// C, N, P1, P2
    pub domain_class_counts: [u64; 4],
    /// Truth-active seconds matching no candidate, left out of training.
    pub domain_unmatched_seconds: u64,
    pub active_params: ForestParams,
    pub domain_params: ForestParams,
}

/// Everything `reconstruct` and `evaluate` need.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub vocabulary: DomainVocabulary,
    pub productivity: ProductivityMap,
    pub active: Forest,
    pub domain: Forest,
    pub threshold: SweepResult,
}

fn class_counts<const N: usize>(data: &Dataset) -> [u64; N] {
    let mut counts = [0u64; N];
    for &l in data.labels() {
        counts[l] += 1;
    }
    counts
}

pub fn train(
    users: &[LabeledUser],
    productivity: &ProductivityMap,
    config: &TrainConfig,
) -> Result<(TrainedModels, TrainingSummary)> {
    if users.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if users.len() == 1 {
        log::warn!("training on a single user");
    }
    let all_visits: Vec<HistoryVisit> = users
        .iter()
        .flat_map(|u| u.history.visits().iter().cloned())
        .collect();
    let vocabulary = compute_top_domains(&all_visits, VOCABULARY_SIZE);
    drop(all_visits);

    let truth_runs: Vec<SecondRuns> = users.iter().map(|u| u.truth.active_runs()).collect();
    let sweep_users: Vec<SweepUser<'_>> = users
        .iter()
        .zip(&truth_runs)
        .map(|(u, t)| SweepUser {
            history: &u.history,
            truth: t,
            in_session: &u.sessions,
        })
        .collect();
    let threshold = sweep_threshold(&sweep_users);
    log::info!("best threshold: {} minutes", threshold.best_minutes);

    let active_sample = RowSample {
        max_rows: config.max_rows,
        seed: config.seed.wrapping_add(2),
    };
    let active_data = build_active_dataset(users, &vocabulary, productivity, Some(active_sample))?;
    let active_params = config.params(config.seed);
    log::info!("fitting activity forest on {} rows", active_data.len());
    let active = Forest::fit(&active_data, 2, &active_params)?;

    let domain_counts = domain_label_counts(users)?;
    let domain_sample = RowSample {
        max_rows: config.max_rows,
        seed: config.seed.wrapping_add(3),
    };
    let domain_data = build_domain_dataset(users, &vocabulary, Some(domain_sample))?;
    let domain_params = config.params(config.seed.wrapping_add(1));
    log::info!("fitting domain forest on {} rows", domain_data.len());
    let domain = Forest::fit(&domain_data, 4, &domain_params)?;

    let summary = TrainingSummary {
        users: sorted_users(users)
            .iter()
            .map(|u| u.user_id().to_owned())
            .collect(),
        vocabulary_fingerprint: vocabulary.fingerprint(),
        threshold_minutes: threshold.best_minutes,
        active_rows_available: count_active_rows(users),
        active_rows_used: active_data.len() as u64,
        active_class_counts: class_counts(&active_data),
        domain_rows_available: domain_counts[..4].iter().sum(),
        domain_rows_used: domain_data.len() as u64,
        domain_class_counts: class_counts(&domain_data),
        domain_unmatched_seconds: domain_counts[4],
        active_params,
        domain_params,
    };
    let models = TrainedModels {
        vocabulary,
        productivity: productivity.clone(),
        active,
        domain,
        threshold,
    };
    Ok((models, summary))
}
