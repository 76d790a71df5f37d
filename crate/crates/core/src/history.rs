//! Browser history ingest.
//!
//! A history export is newline-delimited JSON, one visit per line:
//!
//! ```text
//! {"user_id":"u1","visit_id":7,"referring_visit_id":5,"url":"https://example.com/a","visit_time_ms":1000,"transition":"link"}
//! ```
//!
//! `referring_visit_id` may be `null` or omitted. Blank lines are skipped.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use url::Url;

use crate::error::{Error, Result};
use crate::timeline::second_of;

/// Domain assigned to URLs that cannot be parsed.
pub const INVALID_DOMAIN: &str = "invalid:";

/// Number of domains kept in a vocabulary.
pub const VOCABULARY_SIZE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    Link,
    Typed,
    Reload,
    AutoSubframe,
    ManualSubframe,
    FormSubmit,
    Other,
}

impl Transition {
    pub fn is_subframe(self) -> bool {
        matches!(self, Transition::AutoSubframe | Transition::ManualSubframe)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryVisit {
    pub user_id: String,
    pub visit_id: i64,
    #[serde(default)]
    pub referring_visit_id: Option<i64>,
    pub url: String,
    #[serde(skip)]
    pub domain: String,
    pub visit_time_ms: i64,
    pub transition: Transition,
}

impl HistoryVisit {
    pub fn new(
        user_id: impl Into<String>,
        visit_id: i64,
        referring_visit_id: Option<i64>,
        url: impl Into<String>,
        visit_time_ms: i64,
        transition: Transition,
    ) -> Self {
        let url = url.into();
        HistoryVisit {
            user_id: user_id.into(),
            visit_id,
            referring_visit_id,
            domain: extract_domain(&url),
            url,
            visit_time_ms,
            transition,
        }
    }

    pub fn second(&self) -> i64 {
        second_of(self.visit_time_ms)
    }
}

fn parse_visit_line(line: &str, lineno: usize) -> Result<HistoryVisit> {
    let mut visit: HistoryVisit = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: lineno,
        message: e.to_string(),
    })?;
    if visit.visit_time_ms < 0 {
        return Err(Error::Parse {
            line: lineno,
            message: format!("negative visit_time_ms {}", visit.visit_time_ms),
        });
    }
    if visit.url.is_empty() {
        return Err(Error::Parse {
            line: lineno,
            message: "empty url".into(),
        });
    }
    visit.domain = extract_domain(&visit.url);
    Ok(visit)
}

/// Parses every user in a history export, grouped by user id.
///
/// Each user's visits come back sorted by time (then visit id).
pub fn parse_histories<R: BufRead>(reader: R) -> Result<BTreeMap<String, Vec<HistoryVisit>>> {
    let mut by_user: BTreeMap<String, Vec<HistoryVisit>> = BTreeMap::new();
    let mut seen: HashSet<(String, i64)> = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let visit = parse_visit_line(&line, lineno)?;
        if !seen.insert((visit.user_id.clone(), visit.visit_id)) {
            return Err(Error::DuplicateVisit {
                user_id: visit.user_id,
                visit_id: visit.visit_id,
            });
        }
        by_user
            .entry(visit.user_id.clone())
            .or_default()
            .push(visit);
    }
    for visits in by_user.values_mut() {
        sort_visits(visits);
    }
    Ok(by_user)
}

/// Parses the records of a single user. Records belonging to other users are
/// skipped, so a combined export can be read one user at a time.
pub fn parse_history<R: BufRead>(reader: R, user_id: &str) -> Result<Vec<HistoryVisit>> {
    let mut visits = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let visit = parse_visit_line(&line, lineno)?;
        if visit.user_id != user_id {
            continue;
        }
        if !seen.insert(visit.visit_id) {
            return Err(Error::DuplicateVisit {
                user_id: visit.user_id,
                visit_id: visit.visit_id,
            });
        }
        visits.push(visit);
    }
    sort_visits(&mut visits);
    Ok(visits)
}

fn sort_visits(visits: &mut [HistoryVisit]) {
    visits.sort_by_key(|v| (v.visit_time_ms, v.visit_id));
}

pub fn write_history<W: Write>(mut writer: W, visits: &[HistoryVisit]) -> std::io::Result<()> {
    for visit in visits {
        serde_json::to_writer(&mut writer, visit)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Drops navigations inside frames, which the browser marks explicitly and
/// which never correspond to a focused page.
pub fn filter_frame_navigations(visits: Vec<HistoryVisit>) -> Vec<HistoryVisit> {
    visits
        .into_iter()
        .filter(|v| !v.transition.is_subframe())
        .collect()
}

/// Hostname without one leading `www.` for http(s) URLs; any other scheme is
/// kept whole so pages like `chrome://newtab` stay distinguishable.
pub fn extract_domain(url: &str) -> String {
    let Ok(parsed) = Url::parse(url) else {
        return INVALID_DOMAIN.to_owned();
    };
    match parsed.scheme() {
        "http" | "https" => match parsed.host_str() {
            Some(host) if !host.is_empty() => {
                let host = host.to_ascii_lowercase();
                match host.strip_prefix("www.") {
                    Some(rest) if !rest.is_empty() => rest.to_owned(),
                    _ => host,
                }
            }
            _ => INVALID_DOMAIN.to_owned(),
        },
        _ => url.to_owned(),
    }
}

/// The most visited domains of a training set, in a fixed order, used for
/// one-hot encoding. Domains outside the list encode as all zeros.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct DomainVocabulary {
    domains: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for DomainVocabulary {
    fn from(domains: Vec<String>) -> Self {
        let index = domains
            .iter()
            .enumerate()
            .map(|(i, d)| (d.clone(), i))
            .collect();
        DomainVocabulary { domains, index }
    }
}

impl From<DomainVocabulary> for Vec<String> {
    fn from(vocab: DomainVocabulary) -> Self {
        vocab.domains
    }
}

impl DomainVocabulary {
    pub fn domains(&self) -> &[String] {
        &self.domains
    }

    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    pub fn index_of(&self, domain: &str) -> Option<usize> {
        self.index.get(domain).copied()
    }

    /// Short content hash identifying this vocabulary in model artifacts.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for domain in &self.domains {
            hasher.update(domain.as_bytes());
            hasher.update(b"\n");
        }
        hasher.finalize()[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Reserved vocabulary filler. Never produced by [`extract_domain`] because it
/// does not parse as a URL.
pub fn placeholder_domain(slot: usize) -> String {
    format!("<unused-{slot:02}>")
}

/// Top `k` domains by visit count, ties broken lexicographically. Padded with
/// placeholders when fewer than `k` distinct domains exist.
pub fn compute_top_domains(visits: &[HistoryVisit], k: usize) -> DomainVocabulary {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for visit in visits {
        *counts.entry(visit.domain.as_str()).or_default() += 1;
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut domains: Vec<String> = ranked
        .into_iter()
        .take(k)
        .map(|(d, _)| d.to_owned())
        .collect();
    let mut slot = 0;
    while domains.len() < k {
        domains.push(placeholder_domain(slot));
        slot += 1;
    }
    DomainVocabulary::from(domains)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductivityLevel {
    VeryProductive,
    Productive,
    Neutral,
    Distracting,
    VeryDistracting,
}

impl ProductivityLevel {
    pub const ALL: [ProductivityLevel; 5] = [
        ProductivityLevel::VeryProductive,
        ProductivityLevel::Productive,
        ProductivityLevel::Neutral,
        ProductivityLevel::Distracting,
        ProductivityLevel::VeryDistracting,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn token(self) -> &'static str {
        match self {
            ProductivityLevel::VeryProductive => "very_productive",
            ProductivityLevel::Productive => "productive",
            ProductivityLevel::Neutral => "neutral",
            ProductivityLevel::Distracting => "distracting",
            ProductivityLevel::VeryDistracting => "very_distracting",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.token() == token)
    }
}

/// Domain → productivity level, with neutral for anything unlisted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductivityMap {
    entries: BTreeMap<String, ProductivityLevel>,
}

impl ProductivityMap {
    pub fn insert(&mut self, domain: impl Into<String>, level: ProductivityLevel) {
        self.entries.insert(domain.into(), level);
    }

    pub fn lookup(&self, domain: &str) -> ProductivityLevel {
        self.entries
            .get(domain)
            .copied()
            .unwrap_or(ProductivityLevel::Neutral)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, ProductivityLevel)> {
        self.entries.iter().map(|(d, l)| (d.as_str(), *l))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["domain", "level"])?;
        for (domain, level) in self.iter() {
            out.write_record([domain, level.token()])?;
        }
        out.flush().map_err(|e| Error::io("<productivity>", e))?;
        Ok(())
    }
}

/// Reads a `domain,level` CSV. A leading `domain,level` header row is optional.
pub fn load_productivity_map<R: std::io::Read>(reader: R) -> Result<ProductivityMap> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut map = ProductivityMap::default();
    for (i, record) in csv_reader.records().enumerate() {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != 2 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 2 columns, found {}", record.len()),
            });
        }
        if i == 0 && &record[0] == "domain" && &record[1] == "level" {
            continue;
        }
        let level = ProductivityLevel::from_token(&record[1])
            .ok_or_else(|| Error::UnknownLevel(record[1].to_owned()))?;
        map.insert(&record[0], level);
    }
    Ok(map)
}

/// One user's filtered history, sorted, with per-visit lookups used by the
/// feature builders.
#[derive(Debug, Clone)]
pub struct UserHistory {
    user_id: String,
    visits: Vec<HistoryVisit>,
    seconds: Vec<i64>,
    domain_ids: Vec<u32>,
    domains: Vec<String>,
    // Index of the latest earlier visit whose domain differs from this one.
    prev_other: Vec<Option<usize>>,
}

impl UserHistory {
    /// Filters frame navigations and sorts by time before indexing.
    pub fn new(user_id: impl Into<String>, visits: Vec<HistoryVisit>) -> Self {
        let mut visits = filter_frame_navigations(visits);
        sort_visits(&mut visits);
        let seconds = visits.iter().map(HistoryVisit::second).collect();
        let mut interned: HashMap<String, u32> = HashMap::new();
        let mut domains = Vec::new();
        let domain_ids: Vec<u32> = visits
            .iter()
            .map(|v| {
                *interned.entry(v.domain.clone()).or_insert_with(|| {
                    domains.push(v.domain.clone());
                    (domains.len() - 1) as u32
                })
            })
            .collect();
        let mut prev_other = Vec::with_capacity(visits.len());
        for i in 0..visits.len() {
            let entry = if i == 0 {
                None
            } else if domain_ids[i - 1] != domain_ids[i] {
                Some(i - 1)
            } else {
                prev_other[i - 1]
            };
            prev_other.push(entry);
        }
        UserHistory {
            user_id: user_id.into(),
            visits,
            seconds,
            domain_ids,
            domains,
            prev_other,
        }
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn visits(&self) -> &[HistoryVisit] {
        &self.visits
    }

    pub fn len(&self) -> usize {
        self.visits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visits.is_empty()
    }

    pub fn visit(&self, i: usize) -> &HistoryVisit {
        &self.visits[i]
    }

    pub fn second(&self, i: usize) -> i64 {
        self.seconds[i]
    }

    pub fn seconds(&self) -> &[i64] {
        &self.seconds
    }

    pub fn domain(&self, i: usize) -> &str {
        &self.domains[self.domain_ids[i] as usize]
    }

    pub fn domain_id(&self, i: usize) -> u32 {
        self.domain_ids[i]
    }

    pub fn prev_other(&self, i: usize) -> Option<usize> {
        self.prev_other[i]
    }

    /// Latest visit whose second is at or before `s`.
    pub fn last_at_or_before(&self, s: i64) -> Option<usize> {
        self.seconds.partition_point(|&t| t <= s).checked_sub(1)
    }

    /// Earliest visit whose second is strictly after `s`.
    pub fn first_after(&self, s: i64) -> Option<usize> {
        let i = self.seconds.partition_point(|&t| t <= s);
        (i < self.seconds.len()).then_some(i)
    }

    /// Earliest visit whose second is at or after `s`.
    pub fn first_at_or_after(&self, s: i64) -> usize {
        self.seconds.partition_point(|&t| t < s)
    }

    /// Half-open second ranges over which the previous and next visit stay
    /// fixed, covering `[lo, hi)`.
    pub fn gaps(&self, lo: i64, hi: i64) -> Vec<(i64, i64)> {
        let mut out = Vec::new();
        let mut start = lo;
        let mut i = self.first_after(lo).unwrap_or(self.len());
        while start < hi {
            let end = if i < self.len() {
                self.seconds[i].min(hi)
            } else {
                hi
            };
            out.push((start, end));
            start = end;
            while i < self.len() && self.seconds[i] <= start {
                i += 1;
            }
        }
        out
    }
}
