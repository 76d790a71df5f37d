//! Random-forest classifier built from scratch.
//!
//! Each tree sees a seeded subsample of the rows (without replacement) and
//! draws a fresh subset of features at every node. Splits minimise weighted
//! Gini impurity, with thresholds at midpoints between consecutive distinct
//! values; a row goes left when its value is `<= threshold`.
//!
//! Tree `i` draws from ChaCha8 stream `i` of the forest seed, so the trained
//! model does not depend on how trees are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::features::Monotone;

pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_rows_per_leaf: usize,
    /// Features tried per split; `None` means `floor(sqrt(width))`.
    pub features_per_split: Option<usize>,
    pub row_sample_rate: f64,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 50,
            max_depth: 20,
            min_rows_per_leaf: 1,
            features_per_split: None,
            row_sample_rate: 0.632,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn with_seed(seed: u64) -> Self {
        ForestParams {
            seed,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParameter("n_trees must be at least 1".into()));
        }
        if !(self.row_sample_rate > 0.0 && self.row_sample_rate <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "row_sample_rate {} outside (0, 1]",
                self.row_sample_rate
            )));
        }
        if self.min_rows_per_leaf == 0 {
            return Err(Error::InvalidParameter(
                "min_rows_per_leaf must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn mtries(&self, width: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (width as f64).sqrt().floor() as usize)
            .clamp(1, width.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: Vec<u32>,
        class: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
                Node::Leaf { class, .. } => return *class,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    fn predict_interval(
        &self,
        at: usize,
        lo: i64,
        hi: i64,
        value: &dyn Fn(usize, i64) -> f64,
        shape: &[Monotone],
        out: &mut Vec<(i64, i64, usize)>,
    ) {
        if lo >= hi {
            return;
        }
        match &self.nodes[at] {
            Node::Leaf { class, .. } => out.push((lo, hi, *class)),
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let goes_left = |s: i64| value(*feature, s) <= *threshold;
                match shape[*feature] {
                    Monotone::Constant => {
                        let next = if goes_left(lo) { *left } else { *right };
                        self.predict_interval(next, lo, hi, value, shape, out);
                    }
                    Monotone::Increasing => {
                        // Left side is a prefix.
                        let cut = first_true(lo, hi, |s| !goes_left(s));
                        self.predict_interval(*left, lo, cut, value, shape, out);
                        self.predict_interval(*right, cut, hi, value, shape, out);
                    }
                    Monotone::Decreasing => {
                        // Left side is a suffix.
                        let cut = first_true(lo, hi, goes_left);
                        self.predict_interval(*right, lo, cut, value, shape, out);
                        self.predict_interval(*left, cut, hi, value, shape, out);
                    }
                }
            }
        }
    }
}

/// First `s` in `[lo, hi)` with `pred(s)`, for a predicate that is false then
/// true; `hi` if none.
fn first_true(lo: i64, hi: i64, pred: impl Fn(i64) -> bool) -> i64 {
    let (mut a, mut b) = (lo, hi);
    while a < b {
        let mid = a + (b - a) / 2;
        if pred(mid) {
            b = mid;
        } else {
            a = mid + 1;
        }
    }
    a
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub format_version: u32,
    pub n_classes: usize,
    pub width: usize,
    /// Training rows per class; breaks vote ties.
    pub class_totals: Vec<u64>,
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

/// Class with the most votes; ties go to the class with more training rows,
/// then to the lower class index.
fn pick_class(votes: &[u64], totals: &[u64]) -> usize {
    let mut best = 0;
    for c in 1..votes.len() {
        if (votes[c], totals[c]) > (votes[best], totals[best]) {
            best = c;
        }
    }
    best
}

struct TreeBuilder<'a> {
    data: &'a Dataset,
    params: &'a ForestParams,
    n_classes: usize,
    class_totals: &'a [u64],
    mtries: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    scratch: Vec<(f64, usize)>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

/// `n * gini(counts)`, i.e. `n - sum(c^2) / n`.
fn scaled_gini(counts: &[u64], n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let sum_sq: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
    n as f64 - sum_sq / n as f64
}

impl TreeBuilder<'_> {
    fn leaf(&mut self, counts: &[u64]) -> usize {
        let class = pick_class(counts, self.class_totals);
        self.nodes.push(Node::Leaf {
            counts: counts.iter().map(|&c| c as u32).collect(),
            class,
        });
        self.nodes.len() - 1
    }

    fn build(&mut self, rows: &mut [u32], depth: usize) -> usize {
        let mut counts = vec![0u64; self.n_classes];
        for &r in rows.iter() {
            counts[self.data.labels()[r as usize]] += 1;
        }
        let n = rows.len() as u64;
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.params.max_depth || rows.len() < 2 * self.params.min_rows_per_leaf
        {
            return self.leaf(&counts);
        }
        let parent = scaled_gini(&counts, n);
        let Some(best) = self.find_split(rows, parent) else {
            return self.leaf(&counts);
        };

        // Partition in place: left rows first.
        let mut split_at = 0;
        for i in 0..rows.len() {
            if self.data.value(rows[i] as usize, best.feature) <= best.threshold {
                rows.swap(i, split_at);
                split_at += 1;
            }
        }
        let at = self.nodes.len();
        self.nodes.push(Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: 0,
            right: 0,
        });
        let (left_rows, right_rows) = rows.split_at_mut(split_at);
        let left = self.build(left_rows, depth + 1);
        let right = self.build(right_rows, depth + 1);
        if let Node::Split {
            left: l, right: r, ..
        } = &mut self.nodes[at]
        {
            *l = left;
            *r = right;
        }
        at
    }

    fn find_split(&mut self, rows: &[u32], parent: f64) -> Option<BestSplit> {
        let width = self.data.width();
        let features = rand::seq::index::sample(&mut self.rng, width, self.mtries);
        let min_leaf = self.params.min_rows_per_leaf;
        let n = rows.len();
        let mut best: Option<BestSplit> = None;
        let mut left = vec![0u64; self.n_classes];
        let mut right = vec![0u64; self.n_classes];

        for feature in features.iter() {
            self.scratch.clear();
            self.scratch.extend(rows.iter().map(|&r| {
                (
                    self.data.value(r as usize, feature),
                    self.data.labels()[r as usize],
                )
            }));
            self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            left.fill(0);
            right.fill(0);
            for &(_, label) in &self.scratch {
                right[label] += 1;
            }
            for i in 0..n - 1 {
                let (x, label) = self.scratch[i];
                left[label] += 1;
                right[label] -= 1;
                let next = self.scratch[i + 1].0;
                let n_left = i + 1;
                if x == next || n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let impurity =
                    scaled_gini(&left, n_left as u64) + scaled_gini(&right, (n - n_left) as u64);
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    let mut threshold = x + (next - x) / 2.0;
                    if threshold >= next {
                        threshold = x;
                    }
                    best = Some(BestSplit {
                        feature,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        best.filter(|b| b.impurity < parent - 1e-9 * parent.max(1.0))
    }
}

impl Forest {
    /// Trains on `data`, whose labels must lie in `0..n_classes`.
    pub fn fit(data: &Dataset, n_classes: usize, params: &ForestParams) -> Result<Forest> {
        params.validate()?;
        if data.is_empty() || data.width() == 0 {
            return Err(Error::EmptyDataset);
        }
        if let Some(&bad) = data.labels().iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidParameter(format!(
                "label {bad} outside 0..{n_classes}"
            )));
        }
        let mut class_totals = vec![0u64; n_classes];
        for &l in data.labels() {
            class_totals[l] += 1;
        }
        let mtries = params.mtries(data.width());
        let n = data.len();
        let sample_size = ((n as f64 * params.row_sample_rate).round() as usize).clamp(1, n);

        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                rng.set_stream(t as u64);
                let mut rows: Vec<u32> = rand::seq::index::sample(&mut rng, n, sample_size)
                    .iter()
                    .map(|i| i as u32)
                    .collect();
                rows.sort_unstable();
                let mut builder = TreeBuilder {
                    data,
                    params,
                    n_classes,
                    class_totals: &class_totals,
                    mtries,
                    rng: ChaCha8Rng::seed_from_u64(rng.random()),
                    nodes: Vec::new(),
                    scratch: Vec::with_capacity(rows.len()),
                };
                builder.build(&mut rows, 0);
                Tree {
                    nodes: builder.nodes,
                }
            })
            .collect();

        Ok(Forest {
            format_version: FOREST_FORMAT_VERSION,
            n_classes,
            width: data.width(),
            class_totals,
            params: params.clone(),
            trees,
        })
    }

    fn check_width(&self, got: usize) -> Result<()> {
        if got != self.width {
            return Err(Error::WidthMismatch {
                expected: self.width,
                got,
            });
        }
        Ok(())
    }

    pub fn votes(&self, row: &[f64]) -> Result<Vec<u64>> {
        self.check_width(row.len())?;
        let mut votes = vec![0u64; self.n_classes];
        for tree in &self.trees {
            votes[tree.predict(row)] += 1;
        }
        Ok(votes)
    }

    pub fn predict(&self, row: &[f64]) -> Result<usize> {
        Ok(pick_class(&self.votes(row)?, &self.class_totals))
    }

    pub fn predict_batch<R: AsRef<[f64]>>(&self, rows: &[R]) -> Result<Vec<usize>> {
        rows.iter().map(|r| self.predict(r.as_ref())).collect()
    }

    /// Predicts every second of `[lo, hi)` at once, for rows whose columns
    /// are either constant or monotone in the second (`shape`). `value(j, s)`
    /// must return column `j` of the row at second `s`.
    ///
    /// Returns maximal runs `(start, end, class)` covering `[lo, hi)`, equal
    /// to calling [`Forest::predict`] on every second.
    pub fn predict_interval(
        &self,
        lo: i64,
        hi: i64,
        value: &dyn Fn(usize, i64) -> f64,
        shape: &[Monotone],
    ) -> Result<Vec<(i64, i64, usize)>> {
        self.check_width(shape.len())?;
        if lo >= hi {
            return Ok(Vec::new());
        }
        // Sweep over vote-change events.
        let mut events: Vec<(i64, usize, i64)> = Vec::new();
        let mut segments = Vec::new();
        for tree in &self.trees {
            segments.clear();
            tree.predict_interval(0, lo, hi, value, shape, &mut segments);
            for &(a, b, class) in &segments {
                events.push((a, class, 1));
                events.push((b, class, -1));
            }
        }
        events.sort_unstable();
        let mut votes = vec![0i64; self.n_classes];
        let mut out: Vec<(i64, i64, usize)> = Vec::new();
        let mut i = 0;
        while i < events.len() {
            let at = events[i].0;
            while i < events.len() && events[i].0 == at {
                votes[events[i].1] += events[i].2;
                i += 1;
            }
            if at >= hi {
                break;
            }
            let end = events.get(i).map_or(hi, |e| e.0);
            let counts: Vec<u64> = votes.iter().map(|&v| v as u64).collect();
            let class = pick_class(&counts, &self.class_totals);
            match out.last_mut() {
                Some(last) if last.2 == class && last.1 == at => last.1 = end,
                _ => out.push((at, end, class)),
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Forest> {
        let forest: Forest = serde_json::from_str(text)?;
        forest.check_version()?;
        Ok(forest)
    }

    pub fn check_version(&self) -> Result<()> {
        if self.format_version != FOREST_FORMAT_VERSION {
            return Err(Error::ModelMismatch(format!(
                "forest format version {} (expected {FOREST_FORMAT_VERSION})",
                self.format_version
            )));
        }
        Ok(())
    }
}
