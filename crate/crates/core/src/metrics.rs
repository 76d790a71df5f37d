//! Evaluation statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain_features::DomainClass;
use crate::error::{Error, Result};
use crate::timeline::{SecondGrid, SecondRuns};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    InSession,
    AllSeconds,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl std::ops::AddAssign for BinaryCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }
}

impl BinaryCounts {
    /// Counts over the seconds of `window`, with predictions and truth given
    /// as active-second sets.
    pub fn from_runs(predicted: &SecondRuns, truth: &SecondRuns, window: &SecondRuns) -> Self {
        let pred = predicted.intersect(window);
        let real = truth.intersect(window);
        let tp = pred.intersect(&real).count();
        let fp = pred.count() - tp;
        let fn_ = real.count() - tp;
        let tn = window.count() - tp - fp - fn_;
        BinaryCounts { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn metrics(&self) -> BinaryMetrics {
        BinaryMetrics::from_counts(*self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    #[serde(flatten)]
    pub counts: BinaryCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl BinaryMetrics {
    /// Zero denominators give 0 for precision, recall, F1 and accuracy.
    pub fn from_counts(c: BinaryCounts) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        BinaryMetrics {
            counts: c,
            precision,
            recall,
            f1,
            accuracy: ratio(c.tp + c.tn, c.total()),
        }
    }
}

/// Metrics over aligned per-second sequences. `in_session` marks which
/// seconds count under [`Scope::InSession`].
pub fn binary_metrics(
    predicted: &[bool],
    truth: &[bool],
    in_session: &[bool],
    scope: Scope,
) -> Result<BinaryMetrics> {
    if predicted.len() != truth.len() || truth.len() != in_session.len() {
        return Err(Error::InvalidParameter(
            "prediction, truth and session sequences differ in length".into(),
        ));
    }
    let mut c = BinaryCounts::default();
    for i in 0..truth.len() {
        if scope == Scope::InSession && !in_session[i] {
            continue;
        }
        match (predicted[i], truth[i]) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c.metrics())
}

/// Rows: true class C, N, P1, P2, then NONE (no candidate matches).
/// Columns: predicted class C, N, P1, P2.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix4 {
    pub counts: [[u64; 4]; 5],
}

impl ConfusionMatrix4 {
    pub const NONE_ROW: usize = 4;

    pub fn record(&mut self, truth: Option<DomainClass>, predicted: DomainClass) {
        let row = truth.map_or(Self::NONE_ROW, DomainClass::index);
        self.counts[row][predicted.index()] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix4) {
        for (r, row) in other.counts.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                self.counts[r][c] += v;
            }
        }
    }

    pub fn row_total(&self, row: usize) -> u64 {
        self.counts[row].iter().sum()
    }

    pub fn total(&self) -> u64 {
        (0..5).map(|r| self.row_total(r)).sum()
    }

    pub fn correct(&self) -> u64 {
        (0..4).map(|i| self.counts[i][i]).sum()
    }

    /// Accuracy over every evaluated second; NONE rows are always wrong.
    pub fn accuracy(&self) -> f64 {
        ratio(self.correct(), self.total())
    }

    /// Accuracy over seconds whose domain is one of the four candidates.
    pub fn covered_accuracy(&self) -> f64 {
        ratio(
            self.correct(),
            self.total() - self.row_total(Self::NONE_ROW),
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainCounts {
    pub correct: u64,
    pub total: u64,
}

impl std::ops::AddAssign for DomainCounts {
    fn add_assign(&mut self, o: Self) {
        self.correct += o.correct;
        self.total += o.total;
    }
}

impl DomainCounts {
    pub fn accuracy(&self) -> f64 {
        ratio(self.correct, self.total)
    }
}

pub fn domain_counts(predicted: &SecondGrid, truth: &SecondGrid) -> DomainCounts {
    let mut c = DomainCounts::default();
    for (s, domain) in truth.active() {
        c.total += 1;
        if predicted.domain_at(s) == Some(domain) {
            c.correct += 1;
        }
    }
    c
}

/// Fraction of truth-active seconds where the predicted domain matches.
pub fn domain_accuracy(predicted: &SecondGrid, truth: &SecondGrid) -> f64 {
    domain_counts(predicted, truth).accuracy()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Squared Pearson correlation of `(actual, predicted)` pairs.
pub fn r_squared(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::InvalidParameter(
            "r_squared needs at least 2 pairs".into(),
        ));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (mx, my) = (mean(&xs), mean(&ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidParameter(
            "actual values have zero variance".into(),
        ));
    }
    if syy == 0.0 {
        return Err(Error::InvalidParameter(
            "predicted values have zero variance".into(),
        ));
    }
    Ok(sxy * sxy / (sxx * syy))
}

/// `1 - SS_res / SS_tot` about the identity line `predicted = actual`.
pub fn r_squared_identity(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::InvalidParameter(
            "r_squared needs at least 2 pairs".into(),
        ));
    }
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
    let ss_tot: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::InvalidParameter(
            "actual values have zero variance".into(),
        ));
    }
    let ss_res: f64 = pairs.iter().map(|p| (p.0 - p.1).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMode {
    /// One `(actual, predicted)` total-online pair per user.
    Online,
    /// One pair per domain the user visited.
    PerDomain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub per_user: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub stddev: f64,
}

/// Per user `sum |actual - predicted| / sum actual`, with mean and spread.
pub fn normalized_abs_error(users: &[Vec<(u64, u64)>], mode: ErrorMode) -> Result<ErrorSummary> {
    if users.is_empty() {
        return Err(Error::InvalidParameter("no users".into()));
    }
    let mut per_user = Vec::with_capacity(users.len());
    for (i, pairs) in users.iter().enumerate() {
        if mode == ErrorMode::Online && pairs.len() != 1 {
            return Err(Error::InvalidParameter(format!(
                "user {i}: online mode takes one pair, got {}",
                pairs.len()
            )));
        }
        let actual: u64 = pairs.iter().map(|p| p.0).sum();
        if actual == 0 {
            return Err(Error::InvalidParameter(format!(
                "user {i}: zero actual time"
            )));
        }
        let abs: u64 = pairs.iter().map(|&(a, p)| a.abs_diff(p)).sum();
        per_user.push(abs as f64 / actual as f64);
    }
    let m = mean(&per_user);
    let var = per_user.iter().map(|x| (x - m).powi(2)).sum::<f64>() / per_user.len() as f64;
    Ok(ErrorSummary {
        per_user,
        mean: m,
        stddev: var.sqrt(),
    })
}

/// Exact active-second totals for one grid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserTime {
    pub user_id: String,
    pub online_s: u64,
    pub domains: BTreeMap<String, u64>,
}

pub fn aggregate_time(grid: &SecondGrid) -> UserTime {
    let mut domains: BTreeMap<String, u64> = BTreeMap::new();
    let mut online_s = 0;
    for (_, domain) in grid.active() {
        online_s += 1;
        *domains.entry(domain.to_owned()).or_default() += 1;
    }
    UserTime {
        user_id: grid.user_id().to_owned(),
        online_s,
        domains,
    }
}

/// Actual and predicted times side by side for one user.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeReport {
    pub user_id: String,
    pub actual_online_s: u64,
    pub predicted_online_s: u64,
    /// domain -> (actual, predicted)
    pub domains: BTreeMap<String, (u64, u64)>,
}

impl TimeReport {
    pub fn new(actual: &UserTime, predicted: &UserTime) -> Self {
        let mut domains: BTreeMap<String, (u64, u64)> = BTreeMap::new();
        for (d, &t) in &actual.domains {
            domains.entry(d.clone()).or_default().0 = t;
        }
        for (d, &t) in &predicted.domains {
            domains.entry(d.clone()).or_default().1 = t;
        }
        TimeReport {
            user_id: actual.user_id.clone(),
            actual_online_s: actual.online_s,
            predicted_online_s: predicted.online_s,
            domains,
        }
    }

    /// Domains with actual or predicted time.
    pub fn domain_pairs(&self) -> Vec<(u64, u64)> {
        self.domains
            .values()
            .copied()
            .filter(|&(a, p)| a > 0 || p > 0)
            .collect()
    }
}
