use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::ProblemError;
use crate::seed::rng;

/// Dense labelled samples, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub num_features: usize,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn new(features: Vec<f64>, num_features: usize, labels: Vec<f64>) -> Result<Self, ProblemError> {
        if num_features == 0 || features.len() != labels.len() * num_features {
            return Err(ProblemError::Data(format!(
                "{} feature values do not form {} rows of width {}",
                features.len(),
                labels.len(),
                num_features
            )));
        }
        Ok(Self {
            features,
            num_features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(idx.len() * self.num_features);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            num_features: self.num_features,
            labels,
        }
    }

    /// Shuffles with `seed` and returns `(train, test)` where train holds
    /// `round(train_fraction * len)` samples.
    pub fn split(&self, train_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng(seed));
        let cut = ((train_fraction * self.len() as f64).round() as usize).min(self.len());
        (self.subset(&order[..cut]), self.subset(&order[cut..]))
    }

    /// Maps a two-valued label column onto {-1, +1} (smaller value to -1).
    pub fn to_signed_labels(&self) -> Result<Dataset, ProblemError> {
        let mut distinct: Vec<f64> = self.labels.clone();
        distinct.sort_by(|a, b| a.total_cmp(b));
        distinct.dedup();
        if distinct.len() != 2 {
            return Err(ProblemError::Data(format!(
                "expected exactly two label values, found {}",
                distinct.len()
            )));
        }
        let low = distinct[0];
        let labels = self.labels.iter().map(|&y| if y == low { -1.0 } else { 1.0 }).collect();
        Ok(Dataset {
            labels,
            ..self.clone()
        })
    }

    /// Labels as class indices 0..C−1 (sorted distinct label values).
    pub fn class_indices(&self) -> (Vec<usize>, usize) {
        let mut distinct: Vec<f64> = self.labels.clone();
        distinct.sort_by(|a, b| a.total_cmp(b));
        distinct.dedup();
        let idx = self
            .labels
            .iter()
            .map(|y| distinct.iter().position(|d| d == y).expect("label present"))
            .collect();
        (idx, distinct.len())
    }
}

/// Gaussian clusters. Class `c` is centred at `±(separation/2)·e_{c/2}`
/// (plus for even `c`), so classes 0 and 1 sit exactly `separation` apart;
/// classes beyond `2·num_features` get random directions of the same radius.
/// Labels are class indices `0..classes` stored as `f64`.
pub fn make_blobs(
    seed: u64,
    samples: usize,
    num_features: usize,
    classes: usize,
    separation: f64,
    spread: f64,
) -> Result<Dataset, ProblemError> {
    if classes < 2 || num_features == 0 || samples == 0 {
        return Err(ProblemError::InvalidParameter {
            name: "blobs",
            reason: "need samples >= 1, features >= 1 and classes >= 2".into(),
        });
    }
    let mut rng = rng(seed);
    let radius = 0.5 * separation;
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            if c < 2 * num_features {
                let mut v = vec![0.0; num_features];
                v[c / 2] = if c % 2 == 0 { radius } else { -radius };
                v
            } else {
                let v: Vec<f64> = (0..num_features).map(|_| StandardNormal.sample(&mut rng)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.iter().map(|x| radius * x / n).collect()
            }
        })
        .collect();
    let noise = Normal::new(0.0, spread).map_err(|e| ProblemError::InvalidParameter {
        name: "spread",
        reason: e.to_string(),
    })?;
    let mut features = Vec::with_capacity(samples * num_features);
    let mut labels = Vec::with_capacity(samples);
    for i in 0..samples {
        let class = i % classes;
        for c in &centres[class] {
            features.push(c + noise.sample(&mut rng));
        }
        labels.push(class as f64);
    }
    Dataset::new(features, num_features, labels)
}

/// Dense CSV, one sample per row, label in the last column. A header row is
/// skipped when its first field does not parse as a number.
pub fn load_csv(path: &Path) -> Result<Dataset, ProblemError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ProblemError::Data(format!("{}: {e}", path.display())))?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ProblemError::Data(e.to_string()))?;
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if line == 0 => continue,
            Err(e) => return Err(ProblemError::Data(format!("line {}: {e}", line + 1))),
        };
        if values.len() < 2 {
            return Err(ProblemError::Data(format!("line {}: need features and a label", line + 1)));
        }
        let w = *width.get_or_insert(values.len());
        if values.len() != w {
            return Err(ProblemError::Data(format!(
                "line {}: expected {w} columns, found {}",
                line + 1,
                values.len()
            )));
        }
        features.extend_from_slice(&values[..w - 1]);
        labels.push(values[w - 1]);
    }
    let width = width.ok_or_else(|| ProblemError::Data("no samples".into()))?;
    Dataset::new(features, width - 1, labels)
}

/// LIBSVM sparse text: `label idx:value ...` with one-based feature indices.
/// `num_features` defaults to the largest index seen.
pub fn load_libsvm(path: &Path, num_features: Option<usize>) -> Result<Dataset, ProblemError> {
    let text = std::fs::read_to_string(path).map_err(|e| ProblemError::Data(format!("{}: {e}", path.display())))?;
    let mut sparse: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0;
    for (line_no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| ProblemError::Data(format!("line {}: {msg}", line_no + 1));
        let mut tokens = line.split_whitespace();
        let label: f64 = tokens
            .next()
            .unwrap()
            .parse()
            .map_err(|e| bad(format!("label: {e}")))?;
        let mut row = Vec::new();
        for tok in tokens {
            let (i, v) = tok.split_once(':').ok_or_else(|| bad(format!("malformed pair `{tok}`")))?;
            let i: usize = i.parse().map_err(|e| bad(format!("index: {e}")))?;
            if i == 0 {
                return Err(bad("feature indices are one-based".into()));
            }
            let v: f64 = v.parse().map_err(|e| bad(format!("value: {e}")))?;
            max_index = max_index.max(i);
            row.push((i - 1, v));
        }
        sparse.push(row);
        labels.push(label);
    }
    let width = num_features.unwrap_or(max_index).max(1);
    if max_index > width {
        return Err(ProblemError::Data(format!(
            "feature index {max_index} exceeds declared width {width}"
        )));
    }
    let mut features = vec![0.0; labels.len() * width];
    for (r, row) in sparse.iter().enumerate() {
        for &(j, v) in row {
            features[r * width + j] = v;
        }
    }
    Dataset::new(features, width, labels)
}
