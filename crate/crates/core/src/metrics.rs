//! Binned calibration statistics: reliability bins and the scalar errors
//! ECE, MCE and ACE computed over equal-width confidence bins.
//!
//! A sample with confidence `p` lands in bin `floor(p * m)`, with `p == 1.0`
//! clamped into the last bin, so the bins are `[b/m, (b+1)/m)` except the
//! final one which is closed at 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Per-sample probabilities with the derived prediction and confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    k: usize,
    probabilities: Vec<f64>,
    labels: Vec<usize>,
    sample_ids: Vec<String>,
    predicted: Vec<usize>,
    confidences: Vec<f64>,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probabilities[i * self.k..(i + 1) * self.k]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn predicted(&self) -> &[usize] {
        &self.predicted
    }

    pub fn confidences(&self) -> &[f64] {
        &self.confidences
    }

    pub fn is_correct(&self, i: usize) -> bool {
        self.predicted[i] == self.labels[i]
    }

    /// Fraction of samples whose argmax matches the label.
    pub fn accuracy(&self) -> f64 {
        let correct = (0..self.len()).filter(|&i| self.is_correct(i)).count();
        correct as f64 / self.len() as f64
    }

    pub fn avg_confidence(&self) -> f64 {
        self.confidences.iter().sum::<f64>() / self.len() as f64
    }
}

/// Builds a [`PredictionSet`] with sample ids `"0"`, `"1"`, ...
pub fn derive_predictions(rows: &[Vec<f64>], labels: &[usize]) -> Result<PredictionSet> {
    let ids = (0..labels.len()).map(|i| i.to_string()).collect();
    let k = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != k) {
        return Err(Error::Dimension("ragged probability rows".into()));
    }
    let flat = rows.iter().flatten().copied().collect();
    derive_predictions_flat(flat, k, labels.to_vec(), ids)
}

/// Builds a [`PredictionSet`] from a row-major `n x k` probability matrix.
pub fn derive_predictions_flat(
    probabilities: Vec<f64>,
    k: usize,
    labels: Vec<usize>,
    sample_ids: Vec<String>,
) -> Result<PredictionSet> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::InvalidInput("prediction set needs at least one sample".into()));
    }
    if k < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 classes, got {k}")));
    }
    if probabilities.len() != n * k {
        return Err(Error::Dimension(format!(
            "{} probabilities for {n} labels and {k} classes",
            probabilities.len()
        )));
    }
    if sample_ids.len() != n {
        return Err(Error::Dimension(format!("{} sample ids for {n} labels", sample_ids.len())));
    }
    let mut predicted = Vec::with_capacity(n);
    let mut confidences = Vec::with_capacity(n);
    for (i, row) in probabilities.chunks_exact(k).enumerate() {
        if labels[i] >= k {
            return Err(Error::InvalidInput(format!(
                "label {} of sample {i} is outside [0, {k})",
                labels[i]
            )));
        }
        if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidInput(format!("row {i} has an entry outside [0, 1]")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!("row {i} sums to {sum}, not 1")));
        }
        let (arg, max) = argmax(row);
        predicted.push(arg);
        confidences.push(max);
    }
    Ok(PredictionSet {
        k,
        probabilities,
        labels,
        sample_ids,
        predicted,
        confidences,
    })
}

/// Index and value of the largest entry; ties go to the smallest index.
pub fn argmax(row: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    (best, row[best])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BinningConfig {
    pub m: usize,
}

impl Default for BinningConfig {
    fn default() -> Self {
        Self { m: 10 }
    }
}

impl BinningConfig {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInput("bin count must be at least 1".into()));
        }
        Ok(Self { m })
    }

    pub fn bin_of(&self, confidence: f64) -> usize {
        ((confidence * self.m as f64).floor() as usize).min(self.m - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub bin_index: usize,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Number of correct predictions in the bin.
    pub correct: usize,
    /// Sum of member confidences.
    pub confidence_sum: f64,
    pub accuracy: f64,
    pub confidence: f64,
}

impl BinStats {
    pub fn gap(&self) -> f64 {
        (self.accuracy - self.confidence).abs()
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

pub fn bin_predictions(preds: &PredictionSet, cfg: BinningConfig) -> Vec<BinStats> {
    let m = cfg.m;
    let mut counts = vec![0usize; m];
    let mut correct = vec![0usize; m];
    let mut conf_sums = vec![0.0f64; m];
    for (i, &c) in preds.confidences().iter().enumerate() {
        let b = cfg.bin_of(c);
        counts[b] += 1;
        conf_sums[b] += c;
        if preds.is_correct(i) {
            correct[b] += 1;
        }
    }
    (0..m)
        .map(|b| {
            let count = counts[b];
            let (accuracy, confidence) = if count == 0 {
                (0.0, 0.0)
            } else {
                (correct[b] as f64 / count as f64, conf_sums[b] / count as f64)
            };
            BinStats {
                bin_index: b,
                lower: b as f64 / m as f64,
                upper: (b + 1) as f64 / m as f64,
                count,
                correct: correct[b],
                confidence_sum: conf_sums[b],
                accuracy,
                confidence,
            }
        })
        .collect()
}

/// Expected calibration error: count-weighted mean bin gap.
pub fn ece(bins: &[BinStats], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("ECE over zero samples".into()));
    }
    Ok(bins
        .iter()
        .filter(|b| !b.is_empty())
        .map(|b| b.count as f64 / n as f64 * b.gap())
        .sum())
}

/// Maximum calibration error over nonempty bins.
pub fn mce(bins: &[BinStats]) -> Result<f64> {
    bins.iter()
        .filter(|b| !b.is_empty())
        .map(BinStats::gap)
        .reduce(f64::max)
        .ok_or_else(|| Error::InvalidInput("MCE needs a nonempty bin".into()))
}

/// Average calibration error: unweighted mean gap over the nonempty bins.
pub fn ace(bins: &[BinStats]) -> Result<f64> {
    let gaps: Vec<f64> = bins.iter().filter(|b| !b.is_empty()).map(BinStats::gap).collect();
    if gaps.is_empty() {
        return Err(Error::InvalidInput("ACE needs a nonempty bin".into()));
    }
    Ok(gaps.iter().sum::<f64>() / gaps.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub m: usize,
    pub n: usize,
    pub bins: Vec<BinStats>,
    pub ece: f64,
    pub mce: f64,
    pub ace: f64,
    pub accuracy: f64,
    pub avg_confidence: f64,
    pub nonempty_bins: usize,
}

impl ReliabilityReport {
    /// |avg_confidence - accuracy|
    pub fn confidence_gap(&self) -> f64 {
        (self.avg_confidence - self.accuracy).abs()
    }
}

pub fn summarize(preds: &PredictionSet, cfg: BinningConfig) -> Result<ReliabilityReport> {
    let bins = bin_predictions(preds, cfg);
    let n = preds.len();
    Ok(ReliabilityReport {
        m: cfg.m,
        n,
        ece: ece(&bins, n)?,
        mce: mce(&bins)?,
        ace: ace(&bins)?,
        accuracy: preds.accuracy(),
        avg_confidence: preds.avg_confidence(),
        nonempty_bins: bins.iter().filter(|b| !b.is_empty()).count(),
        bins,
    })
}
