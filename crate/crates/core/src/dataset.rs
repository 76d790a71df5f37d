use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Dense row-major feature matrix with class labels and row keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    width: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    keys: Vec<RowKey>,
}

/// Which user and second a row was built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowKey {
    pub user_id: String,
    pub second: i64,
}

impl Dataset {
    pub fn new(width: usize) -> Self {
        Dataset {
            width,
            ..Default::default()
        }
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: &[usize]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        let mut data = Dataset::new(width);
        for (row, &label) in rows.iter().zip(labels) {
            data.push(
                row,
                label,
                RowKey {
                    user_id: String::new(),
                    second: 0,
                },
            )?;
        }
        Ok(data)
    }

    pub fn push(&mut self, row: &[f64], label: usize, key: RowKey) -> Result<()> {
        if row.len() != self.width {
            return Err(Error::WidthMismatch {
                expected: self.width,
                got: row.len(),
            });
        }
        self.features.extend_from_slice(row);
        self.labels.push(label);
        self.keys.push(key);
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.width..(i + 1) * self.width]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.features[i * self.width + j]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn keys(&self) -> &[RowKey] {
        &self.keys
    }

    /// CSV dump: `user_id,second,<feature columns...>,label`.
    pub fn write_csv<W: Write>(&self, writer: W, feature_names: &[String]) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["user_id".to_owned(), "second".to_owned()];
        header.extend(feature_names.iter().cloned());
        header.push("label".to_owned());
        out.write_record(&header)?;
        for i in 0..self.len() {
            let key = &self.keys[i];
            let mut record = vec![key.user_id.clone(), key.second.to_string()];
            record.extend(self.row(i).iter().map(|x| x.to_string()));
            record.push(self.labels[i].to_string());
            out.write_record(&record)?;
        }
        out.flush().map_err(|e| Error::io("<dataset>", e))?;
        Ok(())
    }
}

/// Picks at most `max_rows` of `total` row positions, uniformly without
/// replacement and deterministically from `seed`, in ascending order.
pub fn sample_positions(total: usize, max_rows: usize, seed: u64) -> Vec<usize> {
    if total <= max_rows {
        return (0..total).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, total, max_rows).into_vec();
    picked.sort_unstable();
    picked
}
