#![allow(dead_code)]

pub mod pipeline;

use histrecon::history::{
    compute_top_domains, DomainVocabulary, HistoryVisit, ProductivityLevel, ProductivityMap,
    Transition, UserHistory,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SENTINEL_S: i64 = 86_400;
pub const WINDOW_S: i64 = 1200;

pub fn ln_dur(d: i64) -> f64 {
    (d.max(1) as f64).ln()
}

pub fn sentinel() -> f64 {
    (SENTINEL_S as f64).ln()
}

fn sec(v: &HistoryVisit) -> i64 {
    v.visit_time_ms.div_euclid(1000)
}

/// A random history of up to `max_visits` visits over a small domain pool,
/// with clustered timestamps, repeated seconds and referrer links.
pub fn random_history(rng: &mut ChaCha8Rng, max_visits: usize) -> UserHistory {
    let n = rng.random_range(1..=max_visits);
    let pool = rng.random_range(1..=30);
    let mut t_ms: i64 = rng.random_range(0..5_000_000);
    let mut visits: Vec<HistoryVisit> = Vec::with_capacity(n);
    for id in 0..n as i64 {
        t_ms += match rng.random_range(0..5) {
            0 => rng.random_range(0..1000),
            1 => rng.random_range(0..60_000),
            2 => rng.random_range(0..900_000),
            3 => rng.random_range(0..3_000_000),
            _ => rng.random_range(0..200_000_000),
        };
        let d = rng.random_range(0..pool);
        let url = match d {
            0 => "chrome://newtab/".to_owned(),
            1 => format!("https://www.site{d}.com/page{}", rng.random_range(0..3)),
            _ => format!("https://site{d}.org/p{}", rng.random_range(0..3)),
        };
        let referrer = if id > 0 && rng.random_bool(0.4) {
            Some(rng.random_range(0..id))
        } else {
            None
        };
        let transition = if rng.random_bool(0.7) {
            Transition::Link
        } else {
            Transition::Typed
        };
        visits.push(HistoryVisit::new("u", id, referrer, url, t_ms, transition));
    }
    UserHistory::new("u", visits)
}

/// Vocabulary over a history, usually with fewer than 20 real domains.
pub fn vocabulary_for(history: &UserHistory) -> DomainVocabulary {
    compute_top_domains(history.visits(), 20)
}

pub fn productivity_for(history: &UserHistory) -> ProductivityMap {
    let mut map = ProductivityMap::default();
    let levels = [
        ProductivityLevel::VeryProductive,
        ProductivityLevel::Productive,
        ProductivityLevel::Distracting,
        ProductivityLevel::VeryDistracting,
    ];
    for (k, v) in history.visits().iter().enumerate().step_by(3) {
        map.insert(v.domain.clone(), levels[k % 4]);
    }
    map
}

fn vocab_pos(vocab: &DomainVocabulary, domain: &str) -> Option<usize> {
    vocab.domains().iter().position(|d| d == domain)
}

fn set_one_hot(out: &mut [f64], offset: usize, idx: Option<usize>) {
    if let Some(i) = idx {
        out[offset + i] = 1.0;
    }
}

/// Full-rescan activity features for second `s`.
pub fn oracle_active(
    s: i64,
    visits: &[HistoryVisit],
    vocab: &DomainVocabulary,
    prod: &ProductivityMap,
) -> Vec<f64> {
    let mut prev = None;
    let mut next = None;
    for (i, v) in visits.iter().enumerate() {
        if sec(v) <= s {
            prev = Some(i);
        }
    }
    for (i, v) in visits.iter().enumerate().rev() {
        if sec(v) > s {
            next = Some(i);
        }
    }
    let mut out = vec![0.0; 48];
    out[0] = match (prev, next) {
        (Some(p), Some(n)) => ln_dur(sec(&visits[n]) - sec(&visits[p])),
        _ => sentinel(),
    };
    out[1] = prev.map_or(sentinel(), |p| ln_dur(s - sec(&visits[p])));
    out[2] = next.map_or(sentinel(), |n| ln_dur(sec(&visits[n]) - s));
    set_one_hot(
        &mut out,
        3,
        prev.and_then(|p| vocab_pos(vocab, &visits[p].domain)),
    );
    set_one_hot(
        &mut out,
        23,
        next.and_then(|n| vocab_pos(vocab, &visits[n].domain)),
    );
    let level = prev.map_or(ProductivityLevel::Neutral, |p| {
        prod.lookup(&visits[p].domain)
    });
    let slot = [
        ProductivityLevel::VeryProductive,
        ProductivityLevel::Productive,
        ProductivityLevel::Neutral,
        ProductivityLevel::Distracting,
        ProductivityLevel::VeryDistracting,
    ]
    .iter()
    .position(|&l| l == level)
    .unwrap();
    out[43 + slot] = 1.0;
    out
}

/// Visit indices of C, N, P1, P2 by rescanning the whole list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleCandidates {
    pub c: usize,
    pub n: Option<usize>,
    pub p1: Option<usize>,
    pub p2: Option<usize>,
}

pub fn oracle_candidates(s: i64, visits: &[HistoryVisit]) -> Option<OracleCandidates> {
    let c = (0..visits.len()).filter(|&i| sec(&visits[i]) <= s).max()?;
    let n = (0..visits.len()).filter(|&i| sec(&visits[i]) > s).min();
    let dc = &visits[c].domain;
    let p1 = (0..c).rev().find(|&i| &visits[i].domain != dc);
    let p2 = p1.and_then(|p1| {
        let d1 = &visits[p1].domain;
        (0..c)
            .rev()
            .find(|&i| &visits[i].domain != dc && &visits[i].domain != d1)
    });
    Some(OracleCandidates { c, n, p1, p2 })
}

/// Most recent visit on `domain` at or before `s`.
fn latest_on(visits: &[HistoryVisit], domain: &str, s: i64) -> Option<usize> {
    (0..visits.len())
        .filter(|&i| sec(&visits[i]) <= s && visits[i].domain == domain)
        .max()
}

fn switches_into(visits: &[HistoryVisit], domain: Option<&str>, s: i64) -> f64 {
    let Some(domain) = domain else { return 0.0 };
    let mut count = 0;
    for j in 1..visits.len() {
        let (a, b) = (&visits[j - 1], &visits[j]);
        if sec(a) >= s - WINDOW_S && sec(b) <= s && b.domain == domain && a.domain != b.domain {
            count += 1;
        }
    }
    f64::from(count)
}

/// Full-rescan focused-domain features for second `s`.
pub fn oracle_domain(s: i64, visits: &[HistoryVisit], vocab: &DomainVocabulary) -> Vec<f64> {
    let k = oracle_candidates(s, visits).expect("a visit at or before s");
    let t = |i: usize| sec(&visits[i]);
    let dom = |i: Option<usize>| i.map(|i| visits[i].domain.as_str());
    let mut out = vec![0.0; 97];
    out[0] = k.n.map_or(sentinel(), |n| ln_dur(t(n) - t(k.c)));
    out[1] = ln_dur(s - t(k.c));
    out[2] = k.n.map_or(sentinel(), |n| ln_dur(t(n) - s));
    out[3] = k.p1.map_or(sentinel(), |p| ln_dur(s - t(p)));
    out[4] = k.p2.map_or(sentinel(), |p| ln_dur(s - t(p)));
    let visits_after = |p: Option<usize>| {
        p.map_or(0, |p| (p + 1..visits.len()).filter(|&j| t(j) <= s).count()) as f64
    };
    out[5] = visits_after(k.p1);
    out[6] = visits_after(k.p2);
    for (slot, x) in [k.n, Some(k.c), k.p1, k.p2].into_iter().enumerate() {
        out[7 + slot] = switches_into(visits, dom(x), s);
    }
    let referrer = k.n.and_then(|n| visits[n].referring_visit_id);
    for (slot, x) in [Some(k.c), k.p1, k.p2].into_iter().enumerate() {
        let hit = match (referrer, dom(x)) {
            (Some(r), Some(d)) => latest_on(visits, d, s).map(|i| visits[i].visit_id) == Some(r),
            _ => false,
        };
        out[11 + slot] = if hit { 1.0 } else { 0.0 };
    }
    for (slot, x) in [Some(k.c), k.n, k.p1, k.p2].into_iter().enumerate() {
        set_one_hot(
            &mut out,
            14 + 20 * slot,
            dom(x).and_then(|d| vocab_pos(vocab, d)),
        );
    }
    for (slot, x) in [Some(k.c), k.p1, k.p2].into_iter().enumerate() {
        let same = matches!((dom(k.n), dom(x)), (Some(a), Some(b)) if a == b);
        out[94 + slot] = if same { 1.0 } else { 0.0 };
    }
    out
}

/// Query seconds around a history: before, at, between and after visits.
pub fn query_seconds(rng: &mut ChaCha8Rng, history: &UserHistory, count: usize) -> Vec<i64> {
    let secs = history.seconds();
    let first = secs[0];
    let last = *secs.last().unwrap();
    let mut out = vec![first - 1, first, last, last + 1, last + 2 * SENTINEL_S];
    while out.len() < count {
        let i = rng.random_range(0..secs.len());
        let s = match rng.random_range(0..4) {
            0 => secs[i],
            1 => secs[i] + rng.random_range(-2..=2),
            2 => secs[i] + rng.random_range(-WINDOW_S - 2..=WINDOW_S + 2),
            _ => rng.random_range(first - 100..=last + 5000),
        };
        out.push(s);
    }
    out
}

pub fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Compares the library's feature builders against the rescan oracles on
/// `n` random histories. Returns the number of query seconds checked, or a
/// description of the first mismatch.
pub fn check_feature_oracles(n: usize, seed: u64) -> Result<usize, String> {
    use histrecon::active_features::{featurize_active, ActiveGap};
    use histrecon::domain_features::{candidates, featurize_domain, DomainGap};

    let mut rng = rng(seed);
    let mut checked = 0;
    for h in 0..n {
        let history = random_history(&mut rng, 50);
        let vocab = vocabulary_for(&history);
        let prod = productivity_for(&history);
        let visits = history.visits();
        for s in query_seconds(&mut rng, &history, 40) {
            let want = oracle_active(s, visits, &vocab, &prod);
            let got = featurize_active(s, &history, &vocab, &prod).encode();
            if bits(&got) != bits(&want) {
                return Err(format!("history {h}, s={s}: active {got:?} != {want:?}"));
            }
            // Interval evaluation from the start of the enclosing gap.
            let lo = history
                .last_at_or_before(s)
                .map_or(s - 50, |i| history.second(i));
            let gap = ActiveGap::at(lo, &history, &vocab, &prod);
            let base = gap.encode(lo);
            let swept: Vec<f64> = (0..want.len()).map(|j| gap.value(&base, j, s)).collect();
            if bits(&swept) != bits(&want) {
                return Err(format!("history {h}, s={s}: active gap value differs"));
            }

            let oracle = oracle_candidates(s, visits);
            let set = candidates(s, &history);
            match (oracle, set) {
                (None, Err(_)) => {}
                (Some(k), Ok(set)) => {
                    let idx = |c: Option<&histrecon::domain_features::Candidate>| {
                        c.map(|c| c.visit_index)
                    };
                    let got = (
                        set.current.visit_index,
                        idx(set.next.as_ref()),
                        idx(set.past1.as_ref()),
                        idx(set.past2.as_ref()),
                    );
                    if got != (k.c, k.n, k.p1, k.p2) {
                        return Err(format!("history {h}, s={s}: candidates {got:?} != {k:?}"));
                    }
                    for (c, i) in [(Some(&set.current), Some(k.c)), (set.next.as_ref(), k.n)] {
                        if let (Some(c), Some(i)) = (c, i) {
                            if c.domain != visits[i].domain || c.second != sec(&visits[i]) {
                                return Err(format!("history {h}, s={s}: candidate fields"));
                            }
                        }
                    }
                    let want = oracle_domain(s, visits, &vocab);
                    let got = featurize_domain(s, &history, &set, &vocab).encode();
                    if bits(&got) != bits(&want) {
                        return Err(format!("history {h}, s={s}: domain {got:?} != {want:?}"));
                    }
                    let c_sec = set.current.second;
                    let gap = DomainGap::new(set, &history, &vocab);
                    let base = gap.encode(c_sec);
                    let swept: Vec<f64> = (0..want.len()).map(|j| gap.value(&base, j, s)).collect();
                    if bits(&swept) != bits(&want) {
                        return Err(format!("history {h}, s={s}: domain gap value differs"));
                    }
                }
                (k, set) => {
                    return Err(format!(
                        "history {h}, s={s}: oracle {k:?} vs library {:?}",
                        set.map(|_| ())
                    ))
                }
            }
            checked += 1;
        }
    }
    Ok(checked)
}

/// Sessions of a per-second activity vector, by walking every second.
pub fn oracle_sessions(active: &[bool], origin: i64, gap: i64) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    let mut open: Option<(i64, i64)> = None;
    for (i, &a) in active.iter().enumerate() {
        let s = origin + i as i64;
        if !a {
            continue;
        }
        open = match open {
            Some((start, last)) if s - last - 1 <= gap => Some((start, s)),
            Some((start, last)) => {
                out.push((start, last + gap));
                Some((s, s))
            }
            None => Some((s, s)),
        };
    }
    if let Some((start, last)) = open {
        out.push((start, last + gap));
    }
    out
}

/// Runs `cases` random activity grids through the library's sessionizer and
/// checks it against the walk above plus the gap and tail rules.
pub fn check_sessions(cases: usize, seed: u64) -> Result<(), String> {
    use histrecon::activity::{sessions, SESSION_GAP_S};
    use histrecon::timeline::SecondGrid;

    let mut rng = rng(seed);
    for case in 0..cases {
        let origin = rng.random_range(-5000..5000);
        let mut cells = Vec::new();
        for _ in 0..rng.random_range(0..12) {
            let quiet = if rng.random_bool(0.5) {
                rng.random_range(SESSION_GAP_S - 5..=SESSION_GAP_S + 5)
            } else {
                rng.random_range(0..3000)
            };
            cells.extend(std::iter::repeat_n(false, quiet as usize));
            cells.extend(std::iter::repeat_n(true, rng.random_range(1..200)));
        }
        let mut grid = SecondGrid::new("u", origin, cells.len());
        for (i, &a) in cells.iter().enumerate() {
            if a {
                grid.set(origin + i as i64, Some("d"));
            }
        }
        let got: Vec<(i64, i64)> = sessions(&grid, SESSION_GAP_S)
            .iter()
            .map(|x| (x.start, x.end))
            .collect();
        if got != oracle_sessions(&cells, origin, SESSION_GAP_S) {
            return Err(format!("case {case}: sessions differ from the walk"));
        }
        for &(start, end) in &got {
            let last = end - SESSION_GAP_S;
            if !grid.is_active(start) || !grid.is_active(last) {
                return Err(format!("case {case}: session bounds not active"));
            }
            if (last + 1..=end).any(|s| grid.is_active(s)) {
                return Err(format!("case {case}: activity inside the tail"));
            }
            let mut quiet = 0;
            for s in start..=last {
                quiet = if grid.is_active(s) { 0 } else { quiet + 1 };
                if quiet > SESSION_GAP_S {
                    return Err(format!("case {case}: quiet run over the gap"));
                }
            }
        }
        for w in got.windows(2) {
            if w[1].0 - (w[0].1 - SESSION_GAP_S) - 1 <= SESSION_GAP_S {
                return Err(format!("case {case}: sessions should have merged"));
            }
        }
    }
    Ok(())
}
