//! Second-resolution timelines: run-length second sets and per-second grids.

use std::collections::HashMap;
use std::io::Write;

/// Second containing the millisecond instant `ms`.
pub fn second_of(ms: i64) -> i64 {
    ms.div_euclid(1000)
}

/// A set of seconds stored as sorted, disjoint, non-adjacent half-open runs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SecondRuns {
    runs: Vec<(i64, i64)>,
}

impl SecondRuns {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from arbitrary (possibly overlapping, unsorted) runs.
    pub fn from_runs(mut runs: Vec<(i64, i64)>) -> Self {
        runs.retain(|&(a, b)| a < b);
        runs.sort_unstable();
        let mut out = SecondRuns::new();
        for (a, b) in runs {
            out.push(a, b);
        }
        out
    }

    /// Appends `[start, end)`; `start` must not precede the last run's start.
    pub fn push(&mut self, start: i64, end: i64) {
        if start >= end {
            return;
        }
        if let Some(last) = self.runs.last_mut() {
            debug_assert!(start >= last.0);
            if start <= last.1 {
                last.1 = last.1.max(end);
                return;
            }
        }
        self.runs.push((start, end));
    }

    pub fn runs(&self) -> &[(i64, i64)] {
        &self.runs
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn count(&self) -> u64 {
        self.runs.iter().map(|&(a, b)| (b - a) as u64).sum()
    }

    pub fn contains(&self, s: i64) -> bool {
        let i = self.runs.partition_point(|&(a, _)| a <= s);
        i > 0 && s < self.runs[i - 1].1
    }

    pub fn seconds(&self) -> impl Iterator<Item = i64> + '_ {
        self.runs.iter().flat_map(|&(a, b)| a..b)
    }

    /// Runs clipped to `[lo, hi)`.
    pub fn clip(&self, lo: i64, hi: i64) -> SecondRuns {
        let mut out = SecondRuns::new();
        for &(a, b) in &self.runs {
            out.push(a.max(lo), b.min(hi));
        }
        out
    }

    pub fn intersect(&self, other: &SecondRuns) -> SecondRuns {
        let mut out = SecondRuns::new();
        let (mut i, mut j) = (0, 0);
        while i < self.runs.len() && j < other.runs.len() {
            let (a0, a1) = self.runs[i];
            let (b0, b1) = other.runs[j];
            out.push(a0.max(b0), a1.min(b1));
            if a1 < b1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        out
    }
}

/// Per-second activity for one user over `[origin, origin + len)`.
///
/// Each second is either inactive or active on exactly one domain; seconds
/// outside the range read as inactive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecondGrid {
    user_id: String,
    origin: i64,
    // 0 = inactive, otherwise 1 + index into `domains`.
    cells: Vec<u32>,
    domains: Vec<String>,
    lookup: HashMap<String, u32>,
}

impl SecondGrid {
    pub fn new(user_id: impl Into<String>, origin: i64, len: usize) -> Self {
        SecondGrid {
            user_id: user_id.into(),
            origin,
            cells: vec![0; len],
            domains: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn origin(&self) -> i64 {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// One past the last covered second.
    pub fn end(&self) -> i64 {
        self.origin + self.cells.len() as i64
    }

    fn slot(&self, s: i64) -> Option<usize> {
        let offset = s.checked_sub(self.origin)?;
        (offset >= 0 && (offset as usize) < self.cells.len()).then_some(offset as usize)
    }

    fn intern(&mut self, domain: &str) -> u32 {
        if let Some(&code) = self.lookup.get(domain) {
            return code;
        }
        self.domains.push(domain.to_owned());
        let code = self.domains.len() as u32;
        self.lookup.insert(domain.to_owned(), code);
        code
    }

    /// Marks `s` active on `domain`, or inactive with `None`.
    ///
    /// Panics if `s` lies outside the grid.
    pub fn set(&mut self, s: i64, domain: Option<&str>) {
        let slot = self
            .slot(s)
            .unwrap_or_else(|| panic!("second {s} outside grid [{}, {})", self.origin, self.end()));
        self.cells[slot] = match domain {
            Some(d) => self.intern(d),
            None => 0,
        };
    }

    /// Sets every second of `[start, end)` (clipped to the grid).
    pub fn fill(&mut self, start: i64, end: i64, domain: Option<&str>) {
        let lo = start.max(self.origin);
        let hi = end.min(self.end());
        if lo >= hi {
            return;
        }
        let code = match domain {
            Some(d) => self.intern(d),
            None => 0,
        };
        let a = (lo - self.origin) as usize;
        let b = (hi - self.origin) as usize;
        self.cells[a..b].fill(code);
    }

    pub fn is_active(&self, s: i64) -> bool {
        self.slot(s).is_some_and(|i| self.cells[i] != 0)
    }

    pub fn domain_at(&self, s: i64) -> Option<&str> {
        let code = self.cells[self.slot(s)?];
        (code != 0).then(|| self.domains[code as usize - 1].as_str())
    }

    /// Active seconds in order, with their domains.
    pub fn active(&self) -> impl Iterator<Item = (i64, &str)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|&(_, &code)| code != 0)
            .map(move |(i, &code)| {
                (
                    self.origin + i as i64,
                    self.domains[code as usize - 1].as_str(),
                )
            })
    }

    pub fn active_count(&self) -> u64 {
        self.cells.iter().filter(|&&c| c != 0).count() as u64
    }

    pub fn active_runs(&self) -> SecondRuns {
        let mut runs = SecondRuns::new();
        let mut start: Option<i64> = None;
        for (i, &code) in self.cells.iter().enumerate() {
            let s = self.origin + i as i64;
            match (code != 0, start) {
                (true, None) => start = Some(s),
                (false, Some(a)) => {
                    runs.push(a, s);
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(a) = start {
            runs.push(a, self.end());
        }
        runs
    }

    /// CSV dump of active seconds: `user_id,second,domain`.
    pub fn write_csv<W: Write>(&self, writer: &mut csv::Writer<W>) -> csv::Result<()> {
        for (s, domain) in self.active() {
            writer.write_record([self.user_id.as_str(), &s.to_string(), domain])?;
        }
        Ok(())
    }
}
