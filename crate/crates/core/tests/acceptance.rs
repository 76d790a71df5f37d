//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use common::pipeline::*;
use common::*;
use histrecon::dataset::Dataset;
use histrecon::evaluate::{evaluate, write_predictions, Evaluation};
use histrecon::forest::{Forest, ForestParams};
use histrecon::metrics::{
    aggregate_time, binary_metrics, normalized_abs_error, r_squared, ErrorMode, Scope,
};
use histrecon::reconstruct::{MostRecentClassifier, Reconstructor, ThresholdPredictor};
use histrecon::simulator::generate_corpus;
use histrecon::training::{train, LabeledUser, TrainConfig, TrainedModels};
use rand::Rng;

const ORACLE_HISTORIES: usize = 1000;
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
const SESSION_CASES: usize = 10_000;
const SEPARABLE_ACCURACY: f64 = 0.99;
const CORPUS_USERS: usize = 80;
const CORPUS_DAYS: u32 = 14;
const CORPUS_SEED: u64 = 1;
const TRAIN_SEED: u64 = 0;
const F1_MARGIN: f64 = 0.02;
const PIPELINE_BUDGET: Duration = Duration::from_secs(600);
const METRIC_TOLERANCE: f64 = 1e-12;
const NO_SWITCH_USERS: usize = 10;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let result = check_feature_oracles(ORACLE_HISTORIES, 20_240_101);
    let elapsed = started.elapsed();
    match result {
        Ok(n) => outcome(
            elapsed < ORACLE_BUDGET,
            format!(
                "{ORACLE_HISTORIES} histories, {n} query seconds bit-identical in {:.1}s",
                elapsed.as_secs_f64()
            ),
        ),
        Err(e) => outcome(false, e),
    }
}

fn sessionization() -> Outcome {
    match check_sessions(SESSION_CASES, 99) {
        Ok(()) => outcome(true, format!("{SESSION_CASES} random grids")),
        Err(e) => outcome(false, e),
    }
}

fn forest_sanity() -> Outcome {
    let mut r = rng(3);
    let rows: Vec<Vec<f64>> = (0..3000)
        .map(|_| (0..5).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let labels: Vec<usize> = rows.iter().map(|x| usize::from(x[0] > 0.0)).collect();
    let data = Dataset::from_rows(&rows, &labels).unwrap();
    let fit_with = |threads: usize, data: &Dataset| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| Forest::fit(data, 2, &ForestParams::with_seed(7)).unwrap())
    };
    let one = fit_with(1, &data);
    let four = fit_with(4, &data);
    let again = fit_with(1, &data);
    let identical = one.to_json().unwrap() == four.to_json().unwrap()
        && one.to_json().unwrap() == again.to_json().unwrap();
    let predicted = one.predict_batch(&rows).unwrap();
    let accuracy = predicted
        .iter()
        .zip(&labels)
        .filter(|(p, l)| p == l)
        .count() as f64
        / rows.len() as f64;

    let single = Dataset::from_rows(&rows, &vec![1; rows.len()]).unwrap();
    let degenerate = fit_with(2, &single);
    let single_ok = degenerate.trees.iter().all(|t| t.nodes.len() == 1)
        && degenerate
            .predict_batch(&rows)
            .unwrap()
            .iter()
            .all(|&c| c == 1);

    outcome(
        identical && accuracy >= SEPARABLE_ACCURACY && single_ok,
        format!(
            "byte-identical across 1/4 threads: {identical}; separable accuracy {accuracy:.4} (>= {SEPARABLE_ACCURACY}); single-class exact: {single_ok}"
        ),
    )
}

struct CorpusRun {
    test_users: Vec<LabeledUser>,
    models: TrainedModels,
    evaluation: Evaluation,
    elapsed: Duration,
    train_count: usize,
}

fn default_corpus_run() -> CorpusRun {
    let started = Instant::now();
    let corpus =
        generate_corpus(CORPUS_USERS, CORPUS_SEED, &profile_with_days(CORPUS_DAYS)).unwrap();
    let users = labeled_users(&corpus);
    let (train_users, test_users): (Vec<LabeledUser>, Vec<LabeledUser>) = users
        .into_iter()
        .partition(|u| corpus.train.iter().any(|id| id == u.user_id()));
    let config = TrainConfig {
        seed: TRAIN_SEED,
        ..TrainConfig::default()
    };
    let (models, _) = train(&train_users, &corpus.productivity, &config).unwrap();
    let active = models.active_model();
    let domains = models.domain_model();
    let forest = Reconstructor {
        activity: &active,
        domains: &domains,
    };
    let threshold = ThresholdPredictor {
        minutes: models.threshold.best_minutes,
    };
    let heuristic = Reconstructor {
        activity: &threshold,
        domains: &MostRecentClassifier,
    };
    let evaluation = evaluate(&test_users, &forest, &heuristic, threshold.minutes, "test").unwrap();
    CorpusRun {
        train_count: train_users.len(),
        test_users,
        models,
        evaluation,
        elapsed: started.elapsed(),
    }
}

fn baseline_ordering(run: &CorpusRun) -> Outcome {
    let a = &run.evaluation.report.active;
    let (forest, threshold, majority) = (
        a.forest.in_session.f1,
        a.threshold.in_session.f1,
        a.majority.in_session.f1,
    );
    let sized = run.train_count >= 40 && run.test_users.len() >= 40;
    let passed = sized
        && forest >= threshold + F1_MARGIN
        && threshold > majority
        && forest > majority
        && run.elapsed < PIPELINE_BUDGET;
    outcome(
        passed,
        format!(
            "{}/{} users, {CORPUS_DAYS} days; in-session F1 forest {forest:.4}, threshold ({} min) {threshold:.4}, majority {majority:.4}; {:.0}s",
            run.train_count,
            run.test_users.len(),
            a.threshold_minutes,
            run.elapsed.as_secs_f64()
        ),
    )
}

fn domain_ordering(run: &CorpusRun) -> Outcome {
    let d = &run.evaluation.report.domain;
    let (forest, recent, top) = (
        d.forest.accuracy,
        d.most_recent.accuracy,
        d.top_domain.accuracy,
    );
    outcome(
        forest > recent && recent > top,
        format!("domain accuracy forest {forest:.4}, most recent {recent:.4}, top domain {top:.4}"),
    )
}

fn aggregation(run: &CorpusRun) -> Outcome {
    let active = run.models.active_model();
    let domains = run.models.domain_model();
    let forest = Reconstructor {
        activity: &active,
        domains: &domains,
    };
    let grids: Vec<_> = run
        .test_users
        .iter()
        .map(|u| forest.reconstruct(&u.history).unwrap())
        .collect();
    let mut dump = Vec::new();
    write_predictions(&mut dump, &grids).unwrap();
    let mut recounted: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    for record in csv::Reader::from_reader(dump.as_slice()).records() {
        let record = record.unwrap();
        *recounted
            .entry(record[0].to_owned())
            .or_default()
            .entry(record[2].to_owned())
            .or_default() += 1;
    }
    let mut seconds = 0;
    for grid in &grids {
        let time = aggregate_time(grid);
        let empty = BTreeMap::new();
        let dumped = recounted.get(grid.user_id()).unwrap_or(&empty);
        if time.domains.values().sum::<u64>() != time.online_s
            || &time.domains != dumped
            || recount(grid) != (time.online_s, time.domains.clone())
        {
            return outcome(false, format!("{}: totals disagree", grid.user_id()));
        }
        seconds += time.online_s;
    }
    outcome(
        true,
        format!(
            "{} users, {seconds} predicted seconds recounted from the dump",
            grids.len()
        ),
    )
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= METRIC_TOLERANCE
}

fn metric_correctness(run: &CorpusRun) -> Outcome {
    let mut failures = Vec::new();

    // tp=2, fp=1, fn=1, tn=0.
    let p = [true, true, true, false];
    let t = [true, true, false, true];
    let m = binary_metrics(&p, &t, &[true; 4], Scope::InSession).unwrap();
    if !(close(m.precision, 2.0 / 3.0)
        && close(m.recall, 2.0 / 3.0)
        && close(m.f1, 2.0 / 3.0)
        && close(m.accuracy, 0.5))
    {
        failures.push("binary toy");
    }
    let none = binary_metrics(&[false; 4], &t, &[true; 4], Scope::AllSeconds).unwrap();
    if !(none.precision == 0.0 && none.recall == 0.0 && none.f1 == 0.0) {
        failures.push("zero denominators");
    }
    // Means 2.5 and 3.5; Sxy = 4, Sxx = Syy = 5, so r^2 = 16/25.
    let r2 = r_squared(&[(1.0, 2.0), (2.0, 3.0), (3.0, 5.0), (4.0, 4.0)]).unwrap();
    if !close(r2, 0.64)
        || !close(
            r_squared(&[(1.0, 2.0), (2.0, 4.0), (5.0, 10.0)]).unwrap(),
            1.0,
        )
    {
        failures.push("r squared");
    }
    let online =
        normalized_abs_error(&[vec![(100, 90)], vec![(200, 260)]], ErrorMode::Online).unwrap();
    if !(close(online.per_user[0], 0.1)
        && close(online.per_user[1], 0.3)
        && close(online.mean, 0.2)
        && close(online.stddev, 0.1))
    {
        failures.push("online error");
    }
    let per_domain =
        normalized_abs_error(&[vec![(60, 50), (40, 55)]], ErrorMode::PerDomain).unwrap();
    if !close(per_domain.mean, 0.25) {
        failures.push("per-domain error");
    }

    // Predictions confined to sessions: only tn and accuracy change with scope.
    let mut scope_ok = true;
    for u in run.test_users.iter().take(5) {
        let (lo, hi) = (u.truth.origin(), u.truth.end());
        let predicted =
            histrecon::baselines::threshold_active_baseline(&u.history, 3).intersect(&u.sessions);
        let p: Vec<bool> = (lo..hi).map(|s| predicted.contains(s)).collect();
        let t: Vec<bool> = (lo..hi).map(|s| u.truth.is_active(s)).collect();
        let w: Vec<bool> = (lo..hi).map(|s| u.sessions.contains(s)).collect();
        let a = binary_metrics(&p, &t, &w, Scope::InSession).unwrap();
        let b = binary_metrics(&p, &t, &w, Scope::AllSeconds).unwrap();
        let (x, y) = (a.counts, b.counts);
        scope_ok &= x.tp == y.tp
            && x.fp == y.fp
            && x.fn_ == y.fn_
            && x.tn < y.tn
            && a.precision == b.precision
            && a.recall == b.recall
            && a.f1 == b.f1
            && a.accuracy < b.accuracy;
    }
    if !scope_ok {
        failures.push("scope");
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("toy tables within {METRIC_TOLERANCE:e}; scopes differ only in tn and accuracy")
        } else {
            format!("mismatch: {}", failures.join(", "))
        },
    )
}

fn no_switching_world() -> Outcome {
    let corpus = generate_corpus(NO_SWITCH_USERS, 17, &no_switch_profile(CORPUS_DAYS)).unwrap();
    let users = labeled_users(&corpus);
    let heuristic = Reconstructor {
        activity: &ThresholdPredictor { minutes: 5 },
        domains: &MostRecentClassifier,
    };
    let eval = evaluate(&users, &heuristic, &heuristic, 5, "all").unwrap();
    let d = &eval.report.domain.most_recent;
    outcome(
        d.accuracy == 1.0 && d.total > 0,
        format!(
            "most-recent accuracy {} ({}/{} active seconds)",
            d.accuracy, d.correct, d.total
        ),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "oracle equivalence", oracle_equivalence()),
        (2, "sessionization", sessionization()),
        (3, "forest sanity", forest_sanity()),
    ];
    let run = default_corpus_run();
    results.push((4, "activity baseline ordering", baseline_ordering(&run)));
    results.push((5, "domain baseline ordering", domain_ordering(&run)));
    results.push((6, "aggregation exactness", aggregation(&run)));
    results.push((7, "metric correctness", metric_correctness(&run)));
    results.push((8, "no-switching world", no_switching_world()));

    let mut failed = 0;
    for (n, name, o) in &results {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("{tag} criterion {n} ({name}): {}", o.detail);
        failed += usize::from(!o.passed);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
