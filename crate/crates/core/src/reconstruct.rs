//! Turning a history into predicted active seconds and focused domains.

use crate::active_features::ActiveGap;
use crate::activity::{session_runs, sessions_from_runs, SESSION_GAP_S};
use crate::baselines::threshold_active_baseline;
use crate::domain_features::{candidates, CandidateSet, DomainClass, DomainGap};
use crate::error::Result;
use crate::features::MISSING_DURATION_S;
use crate::forest::Forest;
use crate::history::{DomainVocabulary, ProductivityMap, UserHistory};
use crate::timeline::{SecondGrid, SecondRuns};

/// Forest class index for an active second.
pub const ACTIVE_CLASS: usize = 1;

/// Seconds reconstructed for a history: from its first visit until a day
/// after its last one. `None` for an empty history.
pub fn reconstruction_window(history: &UserHistory) -> Option<(i64, i64)> {
    let first = *history.seconds().first()?;
    let last = *history.seconds().last()?;
    Some((first, last + MISSING_DURATION_S))
}

/// Sessions implied by the history alone: each visit counts as a minute of
/// activity and the usual session rule is applied to those minutes.
pub fn history_sessions(history: &UserHistory) -> SecondRuns {
    session_runs(&sessions_from_runs(
        &threshold_active_baseline(history, 1),
        SESSION_GAP_S,
    ))
}

/// A run of seconds assigned to one domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainRun {
    pub start: i64,
    pub end: i64,
    /// Candidate class behind the prediction, when there is one.
    pub class: Option<DomainClass>,
    pub domain: String,
}

/// Picks a candidate class for each second of `[lo, hi)`, a range over which
/// the candidate set stays fixed.
pub trait DomainClassifier: Sync {
    fn classify(
        &self,
        history: &UserHistory,
        set: &CandidateSet,
        lo: i64,
        hi: i64,
    ) -> Result<Vec<(i64, i64, DomainClass)>>;
}

/// Always the most recent domain.
pub struct MostRecentClassifier;

impl DomainClassifier for MostRecentClassifier {
    fn classify(
        &self,
        _history: &UserHistory,
        _set: &CandidateSet,
        lo: i64,
        hi: i64,
    ) -> Result<Vec<(i64, i64, DomainClass)>> {
        Ok(vec![(lo, hi, DomainClass::Current)])
    }
}

/// The domain forest together with the vocabulary it was trained with.
#[derive(Debug, Clone)]
pub struct DomainModel {
    pub forest: Forest,
    pub vocabulary: DomainVocabulary,
}

impl DomainClassifier for DomainModel {
    fn classify(
        &self,
        history: &UserHistory,
        set: &CandidateSet,
        lo: i64,
        hi: i64,
    ) -> Result<Vec<(i64, i64, DomainClass)>> {
        let gap = DomainGap::new(set.clone(), history, &self.vocabulary);
        let base = gap.encode(lo);
        let runs =
            self.forest
                .predict_interval(lo, hi, &|j, s| gap.value(&base, j, s), &gap.shape())?;
        Ok(runs
            .into_iter()
            .map(|(a, b, c)| (a, b, DomainClass::from_index(c)))
            .collect())
    }
}

/// Assigns a domain to every second of `active`. Seconds before the first
/// visit take the first visit's domain (class N); a predicted class with no
/// candidate falls back to C.
pub fn classify_active(
    active: &SecondRuns,
    history: &UserHistory,
    classifier: &dyn DomainClassifier,
) -> Result<Vec<DomainRun>> {
    let mut out: Vec<DomainRun> = Vec::new();
    if history.is_empty() {
        return Ok(out);
    }
    let first = history.second(0);
    let mut cached: Option<(usize, CandidateSet)> = None;
    for &(a, b) in active.runs() {
        let mut a = a;
        if a < first {
            push_run(
                &mut out,
                a,
                b.min(first),
                Some(DomainClass::Next),
                history.domain(0),
            );
            a = first;
        }
        for (lo, hi) in history.gaps(a, b) {
            let current = history
                .last_at_or_before(lo)
                .expect("lo is not before the first visit");
            if cached.as_ref().is_none_or(|(i, _)| *i != current) {
                cached = Some((current, candidates(lo, history)?));
            }
            let set = &cached.as_ref().expect("just filled").1;
            for (x, y, class) in classifier.classify(history, set, lo, hi)? {
                push_run(&mut out, x, y, Some(class), set.domain_for(class));
            }
        }
    }
    Ok(out)
}

fn push_run(
    out: &mut Vec<DomainRun>,
    start: i64,
    end: i64,
    class: Option<DomainClass>,
    domain: &str,
) {
    if start >= end {
        return;
    }
    match out.last_mut() {
        Some(last) if last.end == start && last.class == class && last.domain == domain => {
            last.end = end;
        }
        _ => out.push(DomainRun {
            start,
            end,
            class,
            domain: domain.to_owned(),
        }),
    }
}

/// Paints domain runs onto a grid spanning exactly their extent.
pub fn paint_runs(user_id: &str, runs: &[DomainRun]) -> SecondGrid {
    let (Some(first), Some(last)) = (runs.first(), runs.last()) else {
        return SecondGrid::new(user_id, 0, 0);
    };
    let mut grid = SecondGrid::new(user_id, first.start, (last.end - first.start) as usize);
    for r in runs {
        grid.fill(r.start, r.end, Some(&r.domain));
    }
    grid
}

/// Predicts which seconds of `[lo, hi)` the browser is active.
pub trait ActivityPredictor: Sync {
    fn predict_active(&self, history: &UserHistory, lo: i64, hi: i64) -> Result<SecondRuns>;
}

/// Active within a fixed number of minutes after any visit.
pub struct ThresholdPredictor {
    pub minutes: u32,
}

impl ActivityPredictor for ThresholdPredictor {
    fn predict_active(&self, history: &UserHistory, lo: i64, hi: i64) -> Result<SecondRuns> {
        Ok(threshold_active_baseline(history, self.minutes).clip(lo, hi))
    }
}

/// The activity forest with the lookup tables its features need.
///
/// The forest only ever sees in-session seconds while training, so its
/// predictions are restricted to [`history_sessions`].
#[derive(Debug, Clone)]
pub struct ActiveModel {
    pub forest: Forest,
    pub vocabulary: DomainVocabulary,
    pub productivity: ProductivityMap,
}

impl ActivityPredictor for ActiveModel {
    fn predict_active(&self, history: &UserHistory, lo: i64, hi: i64) -> Result<SecondRuns> {
        let mut runs = SecondRuns::new();
        for (a, b) in history.gaps(lo, hi) {
            let gap = ActiveGap::at(a, history, &self.vocabulary, &self.productivity);
            let base = gap.encode(a);
            let pieces =
                self.forest
                    .predict_interval(a, b, &|j, s| gap.value(&base, j, s), &gap.shape())?;
            for (x, y, class) in pieces {
                if class == ACTIVE_CLASS {
                    runs.push(x, y);
                }
            }
        }
        Ok(runs.intersect(&history_sessions(history)))
    }
}

/// An activity predictor paired with a domain classifier.
pub struct Reconstructor<'a> {
    pub activity: &'a dyn ActivityPredictor,
    pub domains: &'a dyn DomainClassifier,
}

impl Reconstructor<'_> {
    /// Predicted active seconds over the reconstruction window.
    pub fn active(&self, history: &UserHistory) -> Result<SecondRuns> {
        match reconstruction_window(history) {
            Some((lo, hi)) => self.activity.predict_active(history, lo, hi),
            None => Ok(SecondRuns::new()),
        }
    }

    pub fn domain_runs(
        &self,
        history: &UserHistory,
        active: &SecondRuns,
    ) -> Result<Vec<DomainRun>> {
        classify_active(active, history, self.domains)
    }

    pub fn reconstruct(&self, history: &UserHistory) -> Result<SecondGrid> {
        let active = self.active(history)?;
        reconstruct_domain_grid(&active, history, self.domains)
    }
}

/// Grid of predicted domains over the predicted-active seconds.
pub fn reconstruct_domain_grid(
    active: &SecondRuns,
    history: &UserHistory,
    classifier: &dyn DomainClassifier,
) -> Result<SecondGrid> {
    let runs = classify_active(active, history, classifier)?;
    Ok(paint_runs(history.user_id(), &runs))
}
