use std::collections::{BTreeMap, HashMap};

use histrecon::activity::SESSION_GAP_S;
use histrecon::domain_features::{label_domain, CandidateSet, DomainClass};
use histrecon::history::UserHistory;
use histrecon::reconstruct::{ActivityPredictor, DomainClassifier};
use histrecon::simulator::{Corpus, PopulationProfile};
use histrecon::timeline::{SecondGrid, SecondRuns};
use histrecon::training::LabeledUser;
use histrecon::Result;

pub fn labeled_users(corpus: &Corpus) -> Vec<LabeledUser> {
    corpus
        .users
        .iter()
        .map(|u| LabeledUser::from_logs(&u.user_id, u.history.clone(), &u.activity))
        .collect()
}

pub fn profile_with_days(days: u32) -> PopulationProfile {
    let mut p = PopulationProfile::default_profile();
    p.base.days = days;
    p
}

pub fn no_switch_profile(days: u32) -> PopulationProfile {
    let mut p = profile_with_days(days);
    p.base.background_tab_prob = 0.0;
    p.base.idle_prob = 0.0;
    p
}

/// In-session seconds by walking the truth grid one second at a time.
pub fn oracle_in_session_seconds(user: &LabeledUser) -> u64 {
    let mut total = 0;
    let mut open: Option<(i64, i64)> = None;
    for s in user.truth.origin()..user.truth.end() {
        if !user.truth.is_active(s) {
            continue;
        }
        open = match open {
            Some((start, last)) if s - last - 1 <= SESSION_GAP_S => Some((start, s)),
            Some((start, last)) => {
                total += (last + SESSION_GAP_S - start + 1) as u64;
                Some((s, s))
            }
            None => Some((s, s)),
        };
    }
    if let Some((start, last)) = open {
        total += (last + SESSION_GAP_S - start + 1) as u64;
    }
    total
}

/// Truth-active seconds whose domain equals the most recent visit's, by
/// scanning the raw visit list for every second.
pub fn oracle_most_recent(user: &LabeledUser) -> (u64, u64) {
    let visits = user.history.visits();
    let (mut correct, mut total) = (0, 0);
    for (s, domain) in user.truth.active() {
        total += 1;
        let latest = visits
            .iter()
            .rfind(|v| v.visit_time_ms.div_euclid(1000) <= s);
        if latest.is_some_and(|v| v.domain == domain) {
            correct += 1;
        }
    }
    (correct, total)
}

/// Predicts exactly the ground truth.
pub struct PerfectActivity(pub HashMap<String, SecondRuns>);

impl PerfectActivity {
    pub fn new(users: &[LabeledUser]) -> Self {
        PerfectActivity(
            users
                .iter()
                .map(|u| (u.user_id().to_owned(), u.truth.active_runs()))
                .collect(),
        )
    }
}

impl ActivityPredictor for PerfectActivity {
    fn predict_active(&self, history: &UserHistory, lo: i64, hi: i64) -> Result<SecondRuns> {
        Ok(self.0[history.user_id()].clip(lo, hi))
    }
}

/// Picks whichever candidate holds the true domain.
pub struct PerfectDomains(pub HashMap<String, SecondGrid>);

impl PerfectDomains {
    pub fn new(users: &[LabeledUser]) -> Self {
        PerfectDomains(
            users
                .iter()
                .map(|u| (u.user_id().to_owned(), u.truth.clone()))
                .collect(),
        )
    }
}

impl DomainClassifier for PerfectDomains {
    fn classify(
        &self,
        history: &UserHistory,
        set: &CandidateSet,
        lo: i64,
        hi: i64,
    ) -> Result<Vec<(i64, i64, DomainClass)>> {
        let truth = &self.0[history.user_id()];
        let mut out: Vec<(i64, i64, DomainClass)> = Vec::new();
        for s in lo..hi {
            let class = truth
                .domain_at(s)
                .and_then(|d| label_domain(d, set))
                .unwrap_or(DomainClass::Current);
            match out.last_mut() {
                Some(last) if last.2 == class => last.1 = s + 1,
                _ => out.push((s, s + 1, class)),
            }
        }
        Ok(out)
    }
}

/// Squared Pearson correlation, written out longhand.
pub fn pearson_r2(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

/// Per-domain active seconds of a grid, counted second by second.
pub fn recount(grid: &SecondGrid) -> (u64, BTreeMap<String, u64>) {
    let mut online = 0;
    let mut domains = BTreeMap::new();
    for s in grid.origin()..grid.end() {
        if let Some(d) = grid.domain_at(s) {
            online += 1;
            *domains.entry(d.to_owned()).or_insert(0) += 1;
        }
    }
    (online, domains)
}
