//! Synthetic imbalanced binary data, CSV round-trip and the AUC metric.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{gaussian_vector, Matrix};

/// Binary dataset with labels in `{+1, −1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AUCDataset {
    /// One row per example.
    pub features: Matrix,
    pub labels: Vec<i8>,
    /// Fraction of positive labels.
    pub p: f64,
}

impl AUCDataset {
    pub fn new(features: Matrix, labels: Vec<i8>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::dim("dataset labels", features.nrows(), labels.len()));
        }
        if labels.is_empty() {
            return Err(Error::Domain("dataset is empty".into()));
        }
        if let Some(bad) = labels.iter().find(|l| **l != 1 && **l != -1) {
            return Err(Error::Domain(format!("label {bad} is not +1 or -1")));
        }
        let pos = labels.iter().filter(|l| **l == 1).count();
        let p = pos as f64 / labels.len() as f64;
        Ok(Self {
            features,
            labels,
            p,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|l| **l == 1).count()
    }

    /// Header `f0,…,f{d−1},label`, one example per line.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out = String::new();
        for j in 0..d {
            out.push_str(&format!("f{j},"));
        }
        out.push_str("label\n");
        for (i, l) in self.labels.iter().enumerate() {
            for j in 0..d {
                out.push_str(&format!("{:.16e},", self.features[(i, j)]));
            }
            out.push_str(if *l == 1 { "1\n" } else { "-1\n" });
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Schema("empty dataset CSV".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.last() != Some(&"label") {
            return Err(Error::Schema("last column must be `label`".into()));
        }
        let d = cols.len() - 1;
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != d + 1 {
                return Err(Error::Schema(format!(
                    "row {} has {} fields, expected {}",
                    lineno + 2,
                    fields.len(),
                    d + 1
                )));
            }
            for f in &fields[..d] {
                let v: f64 = f
                    .parse()
                    .map_err(|_| Error::Schema(format!("row {}: bad number `{f}`", lineno + 2)))?;
                values.push(v);
            }
            labels.push(match fields[d] {
                "1" | "+1" => 1,
                "-1" => -1,
                other => {
                    return Err(Error::Schema(format!(
                        "row {}: label `{other}` is not +1 or -1",
                        lineno + 2
                    )))
                }
            });
        }
        let n = labels.len();
        Self::new(Matrix::from_row_slice(n, d, &values), labels)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// Two Gaussian classes with means `±(s/2)·1/√d` and identity covariance;
/// exactly `round(n·p)` positives, in shuffled order.
pub fn generate_imbalanced_dataset_with(
    n: usize,
    d: usize,
    p: f64,
    separation: f64,
    seed: u64,
) -> Result<AUCDataset> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("p must lie in (0, 1), got {p}")));
    }
    if n < 10 {
        return Err(Error::Domain(format!("need n >= 10, got {n}")));
    }
    if d == 0 {
        return Err(Error::Domain("feature dimension must be positive".into()));
    }
    let pos = (n as f64 * p).round() as usize;
    if pos < 1 || pos >= n {
        return Err(Error::Domain(format!(
            "n·p = {} leaves a class empty",
            n as f64 * p
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<i8> = (0..n).map(|i| if i < pos { 1 } else { -1 }).collect();
    labels.shuffle(&mut rng);
    let shift = 0.5 * separation / (d as f64).sqrt();
    let mut features = Matrix::zeros(n, d);
    for (i, l) in labels.iter().enumerate() {
        let noise = gaussian_vector(d, 1.0, &mut rng);
        for j in 0..d {
            features[(i, j)] = noise[j] + shift * f64::from(*l);
        }
    }
    AUCDataset::new(features, labels)
}

/// [`generate_imbalanced_dataset_with`] at unit separation.
pub fn generate_imbalanced_dataset(n: usize, d: usize, p: f64, seed: u64) -> Result<AUCDataset> {
    generate_imbalanced_dataset_with(n, d, p, 1.0, seed)
}

/// Probability that a positive outscores a negative, ties counted ½.
/// Computed from midranks in `O(n log n)`.
pub fn auc_metric(scores: &[f64], labels: &[i8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::dim("auc_metric labels", scores.len(), labels.len()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::numerical("auc_metric scores", i));
    }
    let n_pos = labels.iter().filter(|l| **l > 0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Domain("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their mean.
        let mid = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if labels[k] > 0 {
                rank_sum += mid;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}
