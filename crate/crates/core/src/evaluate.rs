//! Scoring reconstructions against ground truth.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    majority_activity_baseline, threshold_active_baseline, top_domain_baseline, THRESHOLD_MINUTES,
};
use crate::domain_features::{candidates, label_domain, CandidateSet, DomainClass};
use crate::error::{Error, Result};
use crate::metrics::{
    aggregate_time, normalized_abs_error, r_squared, r_squared_identity, BinaryCounts,
    BinaryMetrics, ConfusionMatrix4, DomainCounts, ErrorMode, TimeReport,
};
use crate::model::write_json;
use crate::reconstruct::{paint_runs, reconstruction_window, DomainRun, Reconstructor};
use crate::timeline::{SecondGrid, SecondRuns};
use crate::training::LabeledUser;

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScopedCounts {
    pub in_session: BinaryCounts,
    pub all_seconds: BinaryCounts,
}

impl std::ops::AddAssign for ScopedCounts {
    fn add_assign(&mut self, o: Self) {
        self.in_session += o.in_session;
        self.all_seconds += o.all_seconds;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScopedMetrics {
    pub in_session: BinaryMetrics,
    pub all_seconds: BinaryMetrics,
}

impl From<ScopedCounts> for ScopedMetrics {
    fn from(c: ScopedCounts) -> Self {
        ScopedMetrics {
            in_session: c.in_session.metrics(),
            all_seconds: c.all_seconds.metrics(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveReport {
    pub forest: ScopedMetrics,
    /// Threshold baseline at the minutes chosen in training.
    pub threshold: ScopedMetrics,
    pub threshold_minutes: u32,
    pub majority: ScopedMetrics,
    pub threshold_sweep: BTreeMap<u32, ScopedMetrics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainAccuracy {
    pub accuracy: f64,
    pub correct: u64,
    pub total: u64,
}

impl From<DomainCounts> for DomainAccuracy {
    fn from(c: DomainCounts) -> Self {
        DomainAccuracy {
            accuracy: c.accuracy(),
            correct: c.correct,
            total: c.total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainReport {
    pub forest: DomainAccuracy,
    pub most_recent: DomainAccuracy,
    pub top_domain: DomainAccuracy,
    /// Forest accuracy over seconds whose domain is one of the candidates.
    pub forest_covered_accuracy: f64,
    /// Rows: true C, N, P1, P2, NONE; columns: predicted C, N, P1, P2.
    pub forest_confusion: ConfusionMatrix4,
    /// Share of truth-active seconds per true class (C, N, P1, P2, NONE).
    pub label_fractions: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub stddev: f64,
    pub users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeAccuracy {
    /// Squared correlation of actual vs predicted online time across users.
    pub online_r2: Option<f64>,
    /// `1 - SS_res / SS_tot` about the identity line.
    pub online_r2_identity: Option<f64>,
    /// Per-user R² over domains, averaged across users.
    pub per_domain_r2_mean: Option<f64>,
    pub per_domain_r2_users: usize,
    pub online_error: Option<ErrorStats>,
    pub per_domain_error: Option<ErrorStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSection {
    pub forest: TimeAccuracy,
    pub heuristic: TimeAccuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub split: String,
    pub users: Vec<String>,
    pub active: ActiveReport,
    pub domain: DomainReport,
    pub time: TimeSection,
}

/// Per-user times behind the report's scatter files.
#[derive(Debug, Clone, PartialEq)]
pub struct UserTimes {
    pub forest: TimeReport,
    pub heuristic: TimeReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvaluationReport,
    pub per_user: Vec<UserTimes>,
}

struct UserResult {
    forest: ScopedCounts,
    threshold: ScopedCounts,
    majority: ScopedCounts,
    sweep: Vec<ScopedCounts>,
    forest_domain: DomainCounts,
    recent_domain: DomainCounts,
    top_domain: DomainCounts,
    confusion: ConfusionMatrix4,
    times: UserTimes,
}

/// Seconds scored under the all-seconds scope: the reconstruction window
/// joined with every second of the ground-truth grid.
fn evaluation_window(user: &LabeledUser) -> (i64, i64) {
    let grid = (user.truth.origin(), user.truth.end());
    match reconstruction_window(&user.history) {
        Some((lo, hi)) if grid.0 < grid.1 => (lo.min(grid.0), hi.max(grid.1)),
        Some(w) => w,
        None => grid,
    }
}

fn scoped(
    predicted: &SecondRuns,
    truth: &SecondRuns,
    sessions: &SecondRuns,
    all: &SecondRuns,
) -> ScopedCounts {
    ScopedCounts {
        in_session: BinaryCounts::from_runs(predicted, truth, sessions),
        all_seconds: BinaryCounts::from_runs(predicted, truth, all),
    }
}

fn score_domains(user: &LabeledUser, runs: &[DomainRun]) -> DomainCounts {
    let mut c = DomainCounts::default();
    for r in runs {
        for s in r.start..r.end {
            c.total += 1;
            if user.truth.domain_at(s) == Some(r.domain.as_str()) {
                c.correct += 1;
            }
        }
    }
    c
}

/// True class of each truth-active second, paired with the prediction.
fn confusion(user: &LabeledUser, runs: &[DomainRun]) -> Result<ConfusionMatrix4> {
    let h = &user.history;
    let mut m = ConfusionMatrix4::default();
    let mut cached: Option<(usize, CandidateSet)> = None;
    for r in runs {
        let Some(predicted) = r.class else { continue };
        for s in r.start..r.end {
            let truth = user
                .truth
                .domain_at(s)
                .expect("scored seconds are truth-active");
            let label = match h.last_at_or_before(s) {
                None => (h.domain(0) == truth).then_some(DomainClass::Next),
                Some(i) => {
                    if cached.as_ref().is_none_or(|(c, _)| *c != i) {
                        cached = Some((i, candidates(s, h)?));
                    }
                    label_domain(truth, &cached.as_ref().expect("just filled").1)
                }
            };
            m.record(label, predicted);
        }
    }
    Ok(m)
}

fn evaluate_user(
    user: &LabeledUser,
    forest: &Reconstructor<'_>,
    heuristic: &Reconstructor<'_>,
    threshold_minutes: u32,
) -> Result<UserResult> {
    let (lo, hi) = evaluation_window(user);
    let all = SecondRuns::from_runs(vec![(lo, hi)]);
    let truth = user.truth.active_runs();
    let history = &user.history;
    let nonempty = !history.is_empty();

    let forest_active = if nonempty {
        forest.activity.predict_active(history, lo, hi)?
    } else {
        SecondRuns::new()
    };
    let threshold_at = |m: u32| threshold_active_baseline(history, m).clip(lo, hi);
    let sweep: Vec<ScopedCounts> = THRESHOLD_MINUTES
        .map(|m| scoped(&threshold_at(m), &truth, &user.sessions, &all))
        .collect();
    let majority_pred = if majority_activity_baseline(&user.truth, &user.sessions) {
        user.sessions.clone()
    } else {
        SecondRuns::new()
    };

    let forest_on_truth = forest.domain_runs(history, &truth)?;
    let recent_on_truth = heuristic.domain_runs(history, &truth)?;
    let top = top_domain_baseline(&user.truth, None);
    let top_correct = top.map_or(0, |d| {
        user.truth.active().filter(|&(_, x)| x == d).count() as u64
    });
    let covered: u64 = forest_on_truth
        .iter()
        .map(|r| (r.end - r.start) as u64)
        .sum();
    if nonempty && covered != truth.count() {
        return Err(Error::InvalidParameter(format!(
            "user {}: domain runs cover {covered} of {} active seconds",
            user.user_id(),
            truth.count()
        )));
    }

    let actual = aggregate_time(&user.truth);
    let forest_grid = paint_runs(
        user.user_id(),
        &forest.domain_runs(history, &forest_active)?,
    );
    let heuristic_active = if nonempty {
        heuristic.activity.predict_active(history, lo, hi)?
    } else {
        SecondRuns::new()
    };
    let heuristic_grid = paint_runs(
        user.user_id(),
        &heuristic.domain_runs(history, &heuristic_active)?,
    );

    Ok(UserResult {
        forest: scoped(&forest_active, &truth, &user.sessions, &all),
        threshold: scoped(
            &threshold_at(threshold_minutes),
            &truth,
            &user.sessions,
            &all,
        ),
        majority: scoped(&majority_pred, &truth, &user.sessions, &all),
        sweep,
        forest_domain: score_domains(user, &forest_on_truth),
        recent_domain: score_domains(user, &recent_on_truth),
        top_domain: DomainCounts {
            correct: top_correct,
            total: truth.count(),
        },
        confusion: confusion(user, &forest_on_truth)?,
        times: UserTimes {
            forest: TimeReport::new(&actual, &aggregate_time(&forest_grid)),
            heuristic: TimeReport::new(&actual, &aggregate_time(&heuristic_grid)),
        },
    })
}

fn time_accuracy(reports: &[&TimeReport]) -> TimeAccuracy {
    let online: Vec<(f64, f64)> = reports
        .iter()
        .map(|r| (r.actual_online_s as f64, r.predicted_online_s as f64))
        .collect();
    let per_domain_r2: Vec<f64> = reports
        .iter()
        .filter_map(|r| {
            let pairs: Vec<(f64, f64)> = r
                .domain_pairs()
                .into_iter()
                .map(|(a, p)| (a as f64, p as f64))
                .collect();
            r_squared(&pairs).ok()
        })
        .collect();
    let with_time: Vec<&&TimeReport> = reports.iter().filter(|r| r.actual_online_s > 0).collect();
    let stats = |mode: ErrorMode| {
        let users: Vec<Vec<(u64, u64)>> = with_time
            .iter()
            .map(|r| match mode {
                ErrorMode::Online => vec![(r.actual_online_s, r.predicted_online_s)],
                ErrorMode::PerDomain => r.domain_pairs(),
            })
            .collect();
        normalized_abs_error(&users, mode).ok().map(|s| ErrorStats {
            mean: s.mean,
            stddev: s.stddev,
            users: s.per_user.len(),
        })
    };
    TimeAccuracy {
        online_r2: r_squared(&online).ok(),
        online_r2_identity: r_squared_identity(&online).ok(),
        per_domain_r2_mean: (!per_domain_r2.is_empty())
            .then(|| per_domain_r2.iter().sum::<f64>() / per_domain_r2.len() as f64),
        per_domain_r2_users: per_domain_r2.len(),
        online_error: stats(ErrorMode::Online),
        per_domain_error: stats(ErrorMode::PerDomain),
    }
}

/// Scores `forest` and every baseline on `users`. The heuristic pairs the
/// threshold predictor with the most-recent domain; its most-recent classifier
/// also supplies the most-recent baseline.
pub fn evaluate(
    users: &[LabeledUser],
    forest: &Reconstructor<'_>,
    heuristic: &Reconstructor<'_>,
    threshold_minutes: u32,
    split: &str,
) -> Result<Evaluation> {
    if users.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let results = users
        .par_iter()
        .map(|u| evaluate_user(u, forest, heuristic, threshold_minutes))
        .collect::<Result<Vec<_>>>()?;

    let mut forest_c = ScopedCounts::default();
    let mut threshold_c = ScopedCounts::default();
    let mut majority_c = ScopedCounts::default();
    let mut sweep_c = vec![ScopedCounts::default(); THRESHOLD_MINUTES.count()];
    let mut forest_d = DomainCounts::default();
    let mut recent_d = DomainCounts::default();
    let mut top_d = DomainCounts::default();
    let mut confusion = ConfusionMatrix4::default();
    for r in &results {
        forest_c += r.forest;
        threshold_c += r.threshold;
        majority_c += r.majority;
        for (acc, c) in sweep_c.iter_mut().zip(&r.sweep) {
            *acc += *c;
        }
        forest_d += r.forest_domain;
        recent_d += r.recent_domain;
        top_d += r.top_domain;
        confusion.merge(&r.confusion);
    }

    let label_total: u64 = confusion.total();
    let mut label_fractions = BTreeMap::new();
    for (row, name) in ["C", "N", "P1", "P2", "NONE"].iter().enumerate() {
        let share = if label_total == 0 {
            0.0
        } else {
            confusion.row_total(row) as f64 / label_total as f64
        };
        label_fractions.insert((*name).to_owned(), share);
    }

    let per_user: Vec<UserTimes> = results.into_iter().map(|r| r.times).collect();
    let forest_times: Vec<&TimeReport> = per_user.iter().map(|t| &t.forest).collect();
    let heuristic_times: Vec<&TimeReport> = per_user.iter().map(|t| &t.heuristic).collect();

    let report = EvaluationReport {
        split: split.to_owned(),
        users: users.iter().map(|u| u.user_id().to_owned()).collect(),
        active: ActiveReport {
            forest: forest_c.into(),
            threshold: threshold_c.into(),
            threshold_minutes,
            majority: majority_c.into(),
            threshold_sweep: THRESHOLD_MINUTES
                .zip(sweep_c)
                .map(|(m, c)| (m, c.into()))
                .collect(),
        },
        domain: DomainReport {
            forest: forest_d.into(),
            most_recent: recent_d.into(),
            top_domain: top_d.into(),
            forest_covered_accuracy: confusion.covered_accuracy(),
            forest_confusion: confusion,
            label_fractions,
        },
        time: TimeSection {
            forest: time_accuracy(&forest_times),
            heuristic: time_accuracy(&heuristic_times),
        },
    };
    Ok(Evaluation { report, per_user })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn metric_record(method: &str, scope: &str, m: &BinaryMetrics) -> Vec<String> {
    let c = m.counts;
    vec![
        method.to_owned(),
        scope.to_owned(),
        c.tp.to_string(),
        c.fp.to_string(),
        c.tn.to_string(),
        c.fn_.to_string(),
        m.precision.to_string(),
        m.recall.to_string(),
        m.f1.to_string(),
        m.accuracy.to_string(),
    ]
}

impl Evaluation {
    /// Writes `report.json` and the CSV tables:
    /// `active_metrics.csv`, `online_time.csv`, `domain_time.csv`,
    /// `domain_totals.csv` and `confusion.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join(REPORT_FILE), &self.report)?;

        let a = &self.report.active;
        let mut out = csv_writer(&dir.join("active_metrics.csv"))?;
        out.write_record([
            "method",
            "scope",
            "tp",
            "fp",
            "tn",
            "fn",
            "precision",
            "recall",
            "f1",
            "accuracy",
        ])?;
        let mut methods: Vec<(String, &ScopedMetrics)> = vec![
            ("forest".into(), &a.forest),
            ("threshold".into(), &a.threshold),
            ("majority".into(), &a.majority),
        ];
        methods.extend(
            a.threshold_sweep
                .iter()
                .map(|(m, s)| (format!("threshold_{m}m"), s)),
        );
        for (name, s) in methods {
            out.write_record(metric_record(&name, "in_session", &s.in_session))?;
            out.write_record(metric_record(&name, "all_seconds", &s.all_seconds))?;
        }
        out.flush().map_err(|e| Error::io(dir, e))?;

        let mut out = csv_writer(&dir.join("online_time.csv"))?;
        out.write_record(["user_id", "actual_s", "forest_s", "heuristic_s"])?;
        for t in &self.per_user {
            out.write_record([
                t.forest.user_id.clone(),
                t.forest.actual_online_s.to_string(),
                t.forest.predicted_online_s.to_string(),
                t.heuristic.predicted_online_s.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io(dir, e))?;

        let mut totals: BTreeMap<&str, [u64; 3]> = BTreeMap::new();
        let mut out = csv_writer(&dir.join("domain_time.csv"))?;
        out.write_record(["user_id", "domain", "actual_s", "forest_s", "heuristic_s"])?;
        for t in &self.per_user {
            let mut rows: BTreeMap<&str, [u64; 3]> = BTreeMap::new();
            for (d, &(actual, predicted)) in &t.forest.domains {
                let row = rows.entry(d).or_default();
                row[0] = actual;
                row[1] = predicted;
            }
            for (d, &(actual, predicted)) in &t.heuristic.domains {
                let row = rows.entry(d).or_default();
                row[0] = actual;
                row[2] = predicted;
            }
            for (d, row) in rows {
                out.write_record([
                    t.forest.user_id.as_str(),
                    d,
                    &row[0].to_string(),
                    &row[1].to_string(),
                    &row[2].to_string(),
                ])?;
                let total = totals.entry(d).or_default();
                for k in 0..3 {
                    total[k] += row[k];
                }
            }
        }
        out.flush().map_err(|e| Error::io(dir, e))?;

        let mut out = csv_writer(&dir.join("domain_totals.csv"))?;
        out.write_record(["domain", "actual_s", "forest_s", "heuristic_s"])?;
        for (d, row) in totals {
            out.write_record([
                d,
                &row[0].to_string(),
                &row[1].to_string(),
                &row[2].to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io(dir, e))?;

        let mut out = csv_writer(&dir.join("confusion.csv"))?;
        out.write_record(["truth", "C", "N", "P1", "P2"])?;
        for (row, name) in ["C", "N", "P1", "P2", "NONE"].iter().enumerate() {
            let mut record = vec![(*name).to_owned()];
            record.extend(
                self.report.domain.forest_confusion.counts[row]
                    .iter()
                    .map(u64::to_string),
            );
            out.write_record(&record)?;
        }
        out.flush().map_err(|e| Error::io(dir, e))?;
        Ok(())
    }
}

/// Per-second predictions as `user_id,second,domain`, one row per active
/// second.
pub fn write_predictions<W: Write>(writer: W, grids: &[SecondGrid]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["user_id", "second", "domain"])?;
    for g in grids {
        g.write_csv(&mut out)?;
    }
    out.flush().map_err(|e| Error::io("<predictions>", e))?;
    Ok(())
}
