//! Synthetic users: ground-truth activity logs together with the browser
//! history those activities leave behind.
//!
//! A user browses in sessions. Within a session each focused page is held for
//! a log-normal dwell time while input events arrive at a per-domain rate.
//! Between pages the user may step away, switch to an open background tab, or
//! navigate (by link or typed URL, in the current tab or a new one). Only
//! navigations to `http(s)` pages produce history visits.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, LogNormal, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activity::{ActivityEvent, EventKind};
use crate::error::{Error, Result};
use crate::history::{HistoryVisit, ProductivityLevel, ProductivityMap, Transition};

/// Focused page that never appears in history.
pub const NEW_TAB_URL: &str = "chrome://newtab/";

const DEFAULT_PROFILE: &str = include_str!("../profiles/default.toml");
const MAX_TABS: usize = 8;
const DAY_MS: i64 = 86_400_000;
const IDLE_AFTER_MS: i64 = 60_000;
const MIN_SESSION_BREAK_MS: i64 = 60_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormalParams {
    pub fn from_median(median: f64, sigma: f64) -> Self {
        LogNormalParams {
            mu: median.ln(),
            sigma,
        }
    }

    pub fn mean(&self) -> f64 {
        (self.mu + self.sigma * self.sigma / 2.0).exp()
    }

    fn distribution(&self, what: &str) -> Result<LogNormal<f64>> {
        LogNormal::new(self.mu, self.sigma).map_err(|e| Error::Profile(format!("{what}: {e}")))
    }
}

fn neutral() -> ProductivityLevel {
    ProductivityLevel::Neutral
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainProfile {
    pub domain: String,
    pub weight: f64,
    pub dwell_s: LogNormalParams,
    /// Mean seconds between input events while a page on this domain is
    /// focused.
    pub input_interval_s: f64,
    /// Chance that leaving a page on this domain is a link click.
    pub link_prob: f64,
    /// Chance that a link click stays on this domain.
    pub same_domain_prob: f64,
    /// Pages on sticky domains tend to stay open in background tabs.
    #[serde(default)]
    pub sticky: bool,
    #[serde(default = "neutral")]
    pub productivity: ProductivityLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    #[serde(default)]
    pub seed: u64,
    pub days: u32,
    /// Midnight of the first simulated day, in Unix milliseconds.
    pub start_ms: i64,
    pub waking_start_h: f64,
    pub waking_end_h: f64,
    /// Poisson mean.
    pub sessions_per_day: f64,
    pub session_length_s: LogNormalParams,
    pub idle_length_s: LogNormalParams,
    /// Time spent on the already-open page when a session resumes.
    pub resume_dwell_s: LogNormalParams,
    pub background_tab_prob: f64,
    pub idle_prob: f64,
    pub nonhistory_prob: f64,
    pub new_tab_prob: f64,
    pub domains: Vec<DomainProfile>,
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Profile(format!(
            "{name} must lie in [0, 1], got {p}"
        )))
    }
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Profile(format!("{name} must be positive, got {x}")))
    }
}

impl UserProfile {
    pub fn validate(&self) -> Result<()> {
        check_prob("background_tab_prob", self.background_tab_prob)?;
        check_prob("idle_prob", self.idle_prob)?;
        check_prob("nonhistory_prob", self.nonhistory_prob)?;
        check_prob("new_tab_prob", self.new_tab_prob)?;
        check_positive("sessions_per_day", self.sessions_per_day)?;
        check_positive("session_length_s mean", self.session_length_s.mean())?;
        check_positive("idle_length_s mean", self.idle_length_s.mean())?;
        check_positive("resume_dwell_s mean", self.resume_dwell_s.mean())?;
        if !(0.0 <= self.waking_start_h
            && self.waking_start_h < self.waking_end_h
            && self.waking_end_h <= 24.0)
        {
            return Err(Error::Profile(
                "waking hours must satisfy 0 <= start < end <= 24".into(),
            ));
        }
        if self.domains.is_empty() {
            return Err(Error::Profile("domain pool is empty".into()));
        }
        for d in &self.domains {
            let name = |field: &str| format!("{}.{field}", d.domain);
            check_positive(&name("weight"), d.weight)?;
            check_positive(&name("dwell_s mean"), d.dwell_s.mean())?;
            check_positive(&name("input_interval_s"), d.input_interval_s)?;
            check_prob(&name("link_prob"), d.link_prob)?;
            check_prob(&name("same_domain_prob"), d.same_domain_prob)?;
        }
        Ok(())
    }

    pub fn productivity_map(&self) -> ProductivityMap {
        let mut map = ProductivityMap::default();
        for d in &self.domains {
            map.insert(d.domain.clone(), d.productivity);
        }
        map
    }
}

/// A base profile plus the per-user spread applied when drawing users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationProfile {
    /// Log-scale standard deviation applied to each domain weight.
    #[serde(default)]
    pub weight_jitter: f64,
    /// Log-scale standard deviation applied to the session rate.
    #[serde(default)]
    pub rate_jitter: f64,
    #[serde(flatten)]
    pub base: UserProfile,
}

impl PopulationProfile {
    pub fn from_toml(text: &str) -> Result<Self> {
        let profile: PopulationProfile =
            toml::from_str(text).map_err(|e| Error::Profile(e.to_string()))?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Profile(e.to_string()))
    }

    /// The profile shipped in `profiles/default.toml`.
    pub fn default_profile() -> Self {
        Self::from_toml(DEFAULT_PROFILE).expect("bundled profile is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weight_jitter >= 0.0 && self.rate_jitter >= 0.0) {
            return Err(Error::Profile("jitter must be non-negative".into()));
        }
        self.base.validate()
    }

    /// Draws one user's profile. Session lengths are not jittered.
    pub fn draw_user<R: Rng>(&self, rng: &mut R) -> UserProfile {
        let mut user = self.base.clone();
        let weight_noise = Normal::new(0.0, self.weight_jitter).expect("validated jitter");
        let rate_noise = Normal::new(0.0, self.rate_jitter).expect("validated jitter");
        for d in &mut user.domains {
            d.weight *= weight_noise.sample(rng).exp();
        }
        user.sessions_per_day *= rate_noise.sample(rng).exp();
        user.seed = rng.random();
        user
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedUser {
    pub user_id: String,
    pub activity: Vec<ActivityEvent>,
    pub history: Vec<HistoryVisit>,
    /// Planned browsing sessions as `(start_ms, end_ms)`.
    pub sessions_ms: Vec<(i64, i64)>,
}

struct Tab {
    url: String,
    domain: Option<usize>,
    last_visit: Option<i64>,
}

struct Browser<'a> {
    profile: &'a UserProfile,
    user_id: &'a str,
    rng: ChaCha8Rng,
    picker: WeightedIndex<f64>,
    events: Vec<ActivityEvent>,
    visits: Vec<HistoryVisit>,
    next_visit_id: i64,
    tabs: Vec<Tab>,
    focused: Option<usize>,
    last_activity_ms: i64,
    idle: bool,
}

impl<'a> Browser<'a> {
    fn emit(&mut self, t: i64, kind: EventKind, url: Option<&str>) {
        self.events
            .push(ActivityEvent::new(self.user_id, t, kind, url));
        match kind {
            EventKind::Input | EventKind::Navigation => {
                self.last_activity_ms = t;
                self.idle = false;
            }
            EventKind::TabFocus | EventKind::WindowFocus => self.idle = false,
            EventKind::IdleStart | EventKind::ScreenLock => self.idle = true,
            _ => {}
        }
    }

    /// Emits the idle notification that fires a minute after the last input,
    /// if it falls before `t`.
    fn settle(&mut self, t: i64) {
        let due = self.last_activity_ms + IDLE_AFTER_MS;
        if !self.idle && due < t {
            self.emit(due, EventKind::IdleStart, None);
        }
    }

    fn exp_ms(&mut self, mean_s: f64) -> i64 {
        let d = Exp::new(1.0 / mean_s).expect("validated rate");
        ((d.sample(&mut self.rng) * 1000.0) as i64).max(1)
    }

    fn log_normal_ms(&mut self, p: LogNormalParams, what: &str) -> i64 {
        let d = p.distribution(what).expect("validated profile");
        ((d.sample(&mut self.rng) * 1000.0) as i64).max(1000)
    }

    fn current_domain(&self) -> Option<&'a DomainProfile> {
        let profile = self.profile;
        self.focused
            .and_then(|i| self.tabs[i].domain)
            .map(|d| &profile.domains[d])
    }

    fn inputs_until(&mut self, from: i64, to: i64) {
        let interval = self.current_domain().map_or(5.0, |d| d.input_interval_s);
        let mut t = from;
        loop {
            t += self.exp_ms(interval);
            if t >= to {
                break;
            }
            self.settle(t);
            self.emit(t, EventKind::Input, None);
        }
    }

    fn url_for(&mut self, domain: usize) -> String {
        let page: u32 = self.rng.random_range(0..400);
        format!("https://{}/p{page}", self.profile.domains[domain].domain)
    }

    fn open_tab(&mut self, tab: Tab) -> usize {
        if self.tabs.len() >= MAX_TABS {
            let victim = (0..self.tabs.len())
                .filter(|&i| Some(i) != self.focused)
                .min_by_key(|&i| {
                    let sticky = self.tabs[i]
                        .domain
                        .is_some_and(|d| self.profile.domains[d].sticky);
                    (sticky, i)
                });
            if let Some(v) = victim {
                self.tabs.remove(v);
                self.focused = self.focused.map(|f| if f > v { f - 1 } else { f });
            }
        }
        self.tabs.push(tab);
        self.tabs.len() - 1
    }

    fn navigate(
        &mut self,
        t: i64,
        tab: usize,
        domain: usize,
        transition: Transition,
        referrer: Option<i64>,
    ) {
        let url = self.url_for(domain);
        let id = self.next_visit_id;
        self.next_visit_id += 1;
        self.focused = Some(tab);
        self.tabs[tab] = Tab {
            url: url.clone(),
            domain: Some(domain),
            last_visit: Some(id),
        };
        self.settle(t);
        self.emit(t, EventKind::Navigation, Some(&url));
        self.visits.push(HistoryVisit::new(
            self.user_id,
            id,
            referrer,
            url,
            t,
            transition,
        ));
    }

    fn focus_tab(&mut self, t: i64, tab: usize) {
        self.focused = Some(tab);
        let url = self.tabs[tab].url.clone();
        self.settle(t);
        self.emit(t, EventKind::TabFocus, Some(&url));
        self.emit(t, EventKind::Input, None);
    }

    fn pick_domain(&mut self) -> usize {
        self.picker.sample(&mut self.rng)
    }

    /// Leaves the current page at `t`; returns the time the next page gets
    /// focus, which may exceed `end`.
    fn next_page(&mut self, t: i64, end: i64) -> i64 {
        let p = self.profile;
        let others: Vec<usize> = (0..self.tabs.len())
            .filter(|&i| Some(i) != self.focused)
            .collect();
        if !others.is_empty() && self.rng.random::<f64>() < p.background_tab_prob {
            let weights: Vec<f64> = others
                .iter()
                .map(|&i| match self.tabs[i].domain {
                    Some(d) if p.domains[d].sticky => 4.0,
                    _ => 1.0,
                })
                .collect();
            let pick = WeightedIndex::new(&weights).expect("positive weights");
            let tab = others[pick.sample(&mut self.rng)];
            self.focus_tab(t, tab);
            return t;
        }

        let current = self.current_domain();
        let source = self.focused.and_then(|i| self.tabs[i].last_visit);
        let link =
            source.is_some() && current.is_some_and(|d| self.rng.random::<f64>() < d.link_prob);
        let domain = match current {
            Some(d) if link && self.rng.random::<f64>() < d.same_domain_prob => p
                .domains
                .iter()
                .position(|x| x.domain == d.domain)
                .expect("pool domain"),
            _ => self.pick_domain(),
        };
        let tabs_allowed = p.background_tab_prob > 0.0;
        let new_tab = tabs_allowed
            && (current.is_some_and(|d| d.sticky) || self.rng.random::<f64>() < p.new_tab_prob);

        if !new_tab {
            let tab = match self.focused {
                Some(i) => i,
                None => self.open_tab(Tab {
                    url: String::new(),
                    domain: None,
                    last_visit: None,
                }),
            };
            let transition = if link {
                Transition::Link
            } else {
                Transition::Typed
            };
            self.navigate(t, tab, domain, transition, if link { source } else { None });
            return t;
        }

        if !link && self.rng.random::<f64>() < p.nonhistory_prob {
            let tab = self.open_tab(Tab {
                url: NEW_TAB_URL.to_owned(),
                domain: None,
                last_visit: None,
            });
            self.focus_tab(t, tab);
            let typed_at = t + self.rng.random_range(2_000..12_000);
            self.inputs_until(t, typed_at.min(end));
            if typed_at >= end {
                return typed_at;
            }
            self.navigate(typed_at, tab, domain, Transition::Typed, None);
            return typed_at;
        }
        let tab = self.open_tab(Tab {
            url: String::new(),
            domain: None,
            last_visit: None,
        });
        let transition = if link {
            Transition::Link
        } else {
            Transition::Typed
        };
        self.navigate(t, tab, domain, transition, if link { source } else { None });
        t
    }

    fn run_session(&mut self, start: i64, end: i64) {
        let p = self.profile;
        let resumed = self.focused.is_some();
        match self.focused {
            Some(tab) => {
                let url = self.tabs[tab].url.clone();
                self.settle(start);
                self.emit(start, EventKind::WindowFocus, Some(&url));
                self.emit(start, EventKind::Input, None);
            }
            None => {
                let tab = self.open_tab(Tab {
                    url: String::new(),
                    domain: None,
                    last_visit: None,
                });
                let domain = self.pick_domain();
                self.navigate(start, tab, domain, Transition::Typed, None);
            }
        }
        let mut t = start;
        if resumed {
            let glance = self.log_normal_ms(p.resume_dwell_s, "resume_dwell_s");
            t = (start + glance).min(end);
            self.inputs_until(start, t);
            if t < end {
                t = self.next_page(t, end);
            }
        }
        while t < end {
            let dwell = match self.current_domain() {
                Some(d) => self.log_normal_ms(d.dwell_s, &d.domain),
                None => 5_000,
            };
            let page_end = (t + dwell).min(end);
            self.inputs_until(t, page_end);
            t = page_end;
            if t >= end {
                break;
            }
            if self.rng.random::<f64>() < p.idle_prob {
                let away = self.log_normal_ms(p.idle_length_s, "idle_length_s");
                if t + away >= end {
                    t = end;
                    break;
                }
                if self.rng.random::<bool>() {
                    self.settle(t);
                    self.emit(t, EventKind::WindowBlur, None);
                    t += away;
                    let url = self.focused.map(|i| self.tabs[i].url.clone());
                    self.settle(t);
                    self.emit(t, EventKind::WindowFocus, url.as_deref());
                } else {
                    t += away;
                    self.settle(t);
                }
                self.emit(t, EventKind::Input, None);
                continue;
            }
            t = self.next_page(t, end);
        }
        self.settle(t);
        let r: f64 = self.rng.random();
        if r < 0.1 {
            self.emit(t, EventKind::WindowClose, None);
            self.tabs.clear();
            self.focused = None;
        } else if r < 0.3 {
            self.emit(t, EventKind::ScreenLock, None);
        } else {
            self.emit(t, EventKind::WindowBlur, None);
        }
    }
}

fn plan_sessions(profile: &UserProfile, rng: &mut ChaCha8Rng) -> Result<Vec<(i64, i64)>> {
    let count = Poisson::new(profile.sessions_per_day)
        .map_err(|e| Error::Profile(format!("sessions_per_day: {e}")))?;
    let length = profile.session_length_s.distribution("session_length_s")?;
    let wake = (profile.waking_start_h * 3_600_000.0) as i64;
    let sleep = (profile.waking_end_h * 3_600_000.0) as i64;
    let mut planned = Vec::new();
    let mut free_at = i64::MIN;
    for day in 0..i64::from(profile.days) {
        let midnight = profile.start_ms + day * DAY_MS;
        let n = count.sample(rng) as usize;
        let mut starts: Vec<i64> = (0..n)
            .map(|_| midnight + rng.random_range(wake..sleep))
            .collect();
        starts.sort_unstable();
        for s in starts {
            let len = ((length.sample(rng) * 1000.0) as i64).max(1000);
            let start = s.max(free_at);
            planned.push((start, start + len));
            free_at = start + len + MIN_SESSION_BREAK_MS;
        }
    }
    Ok(planned)
}

/// Simulates one user. Output is a pure function of `profile`.
pub fn generate_user(user_id: &str, profile: &UserProfile) -> Result<SimulatedUser> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let sessions_ms = plan_sessions(profile, &mut rng)?;
    let weights: Vec<f64> = profile.domains.iter().map(|d| d.weight).collect();
    let picker = WeightedIndex::new(&weights).map_err(|e| Error::Profile(e.to_string()))?;
    let mut browser = Browser {
        profile,
        user_id,
        rng,
        picker,
        events: Vec::new(),
        visits: Vec::new(),
        next_visit_id: 1,
        tabs: Vec::new(),
        focused: None,
        last_activity_ms: i64::MIN / 2,
        idle: true,
    };
    for &(start, end) in &sessions_ms {
        browser.run_session(start, end);
    }
    Ok(SimulatedUser {
        user_id: user_id.to_owned(),
        activity: browser.events,
        history: browser.visits,
        sessions_ms,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub master_seed: u64,
    pub users: Vec<SimulatedUser>,
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub productivity: ProductivityMap,
}

pub fn user_id_for(index: usize) -> String {
    format!("user{index:03}")
}

/// Even-indexed users train, odd-indexed users test.
pub fn generate_corpus(
    n_users: usize,
    master_seed: u64,
    population: &PopulationProfile,
) -> Result<Corpus> {
    population.validate()?;
    let profiles: Vec<UserProfile> = (0..n_users)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
            rng.set_stream(i as u64);
            population.draw_user(&mut rng)
        })
        .collect();
    let users = profiles
        .par_iter()
        .enumerate()
        .map(|(i, p)| generate_user(&user_id_for(i), p))
        .collect::<Result<Vec<_>>>()?;
    let (train, test) = (0..n_users).map(user_id_for).enumerate().fold(
        (Vec::new(), Vec::new()),
        |(mut train, mut test), (i, id)| {
            if i % 2 == 0 {
                train.push(id);
            } else {
                test.push(id);
            }
            (train, test)
        },
    );
    Ok(Corpus {
        master_seed,
        users,
        train,
        test,
        productivity: population.base.productivity_map(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activity::build_spans;

    fn small() -> UserProfile {
        let mut p = PopulationProfile::default_profile().base;
        p.days = 2;
        p.seed = 3;
        p
    }

    #[test]
    fn bundled_profile_round_trips() {
        let p = PopulationProfile::default_profile();
        assert_eq!(
            PopulationProfile::from_toml(&p.to_toml().unwrap()).unwrap(),
            p
        );
    }

    #[test]
    fn invalid_profiles_rejected() {
        let mut p = PopulationProfile::default_profile();
        p.base.idle_prob = 1.5;
        assert!(p.validate().is_err());
        let mut p = PopulationProfile::default_profile();
        p.base.domains.clear();
        assert!(p.validate().is_err());
        assert!(PopulationProfile::from_toml("days = \"x\"").is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_user("u", &small()).unwrap();
        assert_eq!(a, generate_user("u", &small()).unwrap());
        let mut other = small();
        other.seed = 4;
        assert_ne!(a.history, generate_user("u", &other).unwrap().history);
    }

    #[test]
    fn events_sorted_and_visits_inside_spans() {
        let user = generate_user("u", &small()).unwrap();
        assert!(!user.history.is_empty());
        assert!(user
            .activity
            .windows(2)
            .all(|w| w[0].time_ms <= w[1].time_ms));
        let spans = build_spans(&user.activity);
        for v in &user.history {
            assert!(
                spans.iter().any(|s| s.url == v.url
                    && s.start_ms <= v.visit_time_ms
                    && v.visit_time_ms < s.end_ms),
                "visit {} outside spans",
                v.visit_id
            );
        }
    }

    #[test]
    fn split_rule() {
        let c = generate_corpus(4, 9, &PopulationProfile::default_profile()).unwrap();
        assert_eq!(c.train, ["user000", "user002"]);
        assert_eq!(c.test, ["user001", "user003"]);
    }
}
