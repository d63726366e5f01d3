//! Temperature scaling: softmax with a single temperature, holdout NLL and
//! the one-parameter temperature fit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{derive_predictions_flat, PredictionSet};

/// Row-major logits with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMatrix {
    k: usize,
    logits: Vec<f64>,
    labels: Vec<usize>,
    sample_ids: Vec<String>,
}

impl LogitMatrix {
    pub fn new(k: usize, logits: Vec<f64>, labels: Vec<usize>, sample_ids: Vec<String>) -> Result<Self> {
        let n = labels.len();
        if k < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 classes, got {k}")));
        }
        if logits.len() != n * k || sample_ids.len() != n {
            return Err(Error::Dimension(format!(
                "{} logits and {} ids for {n} samples of {k} classes",
                logits.len(),
                sample_ids.len()
            )));
        }
        if let Some(i) = logits.iter().position(|z| !z.is_finite()) {
            return Err(Error::Numeric(format!("non-finite logit in row {}", i / k)));
        }
        if let Some(i) = labels.iter().position(|&y| y >= k) {
            return Err(Error::InvalidInput(format!("label {} of row {i} is outside [0, {k})", labels[i])));
        }
        Ok(Self {
            k,
            logits,
            labels,
            sample_ids,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: &[usize]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Dimension("ragged logit rows".into()));
        }
        let ids = (0..labels.len()).map(|i| i.to_string()).collect();
        Self::new(k, rows.iter().flatten().copied().collect(), labels.to_vec(), ids)
    }

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
        &self.logits[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.logits.chunks_exact(self.k)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    /// Every logit multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.k,
            self.logits.iter().map(|z| z * c).collect(),
            self.labels.clone(),
            self.sample_ids.clone(),
        )
    }

    /// Rows `indices` in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            k: self.k,
            logits: indices.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            sample_ids: indices.iter().map(|&i| self.sample_ids[i].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Temperature {
    pub value: f64,
    pub nll_at_fit: f64,
    pub iterations: usize,
}

impl Temperature {
    pub fn new(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidInput(format!("temperature must be finite and > 0, got {value}")));
        }
        Ok(Self {
            value,
            nll_at_fit: f64::NAN,
            iterations: 0,
        })
    }

    pub fn identity() -> Self {
        Self {
            value: 1.0,
            nll_at_fit: f64::NAN,
            iterations: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub log_t_lower: f64,
    pub log_t_upper: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            log_t_lower: 0.05f64.ln(),
            log_t_upper: 20f64.ln(),
            tolerance: 1e-6,
            max_iterations: 200,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.log_t_lower.is_finite() && self.log_t_upper.is_finite()) {
            return Err(Error::Config("fit bounds must be finite".into()));
        }
        if self.log_t_lower >= self.log_t_upper {
            return Err(Error::Config(format!(
                "fit.log_t_lower ({}) must be below fit.log_t_upper ({})",
                self.log_t_lower, self.log_t_upper
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("fit.tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("fit.max_iterations must be positive".into()));
        }
        Ok(())
    }
}

fn check_row(logit_row: &[f64], t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidInput(format!("temperature must be finite and > 0, got {t}")));
    }
    if logit_row.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numeric("non-finite logit".into()));
    }
    Ok(())
}

/// `softmax(z / t)` with the row maximum subtracted first.
pub fn softmax_with_temperature(logit_row: &[f64], t: &Temperature) -> Result<Vec<f64>> {
    check_row(logit_row, t.value)?;
    Ok(softmax_unchecked(logit_row, t.value))
}

fn softmax_unchecked(z: &[f64], t: f64) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|&v| ((v - max) / t).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

/// `ln softmax(z / t)[label]` via log-sum-exp.
fn log_prob(z: &[f64], label: usize, t: f64) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse: f64 = z.iter().map(|&v| ((v - max) / t).exp()).sum::<f64>().ln();
    (z[label] - max) / t - lse
}

pub fn scale_probabilities(m: &LogitMatrix, t: &Temperature) -> Result<PredictionSet> {
    Temperature::new(t.value)?;
    let probabilities = m.rows().flat_map(|row| softmax_unchecked(row, t.value)).collect();
    derive_predictions_flat(probabilities, m.k, m.labels.clone(), m.sample_ids.clone())
}

/// Mean negative log-likelihood of the labels at temperature `t`.
/// Summation runs sequentially in sample order.
pub fn nll(m: &LogitMatrix, t: &Temperature) -> Result<f64> {
    Temperature::new(t.value)?;
    Ok(nll_at(m, t.value))
}

fn nll_at(m: &LogitMatrix, t: f64) -> f64 {
    let total: f64 = m.rows().zip(&m.labels).map(|(z, &y)| -log_prob(z, y, t)).sum();
    total / m.len() as f64
}

const GRID_POINTS: usize = 64;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Fits `T` by minimizing holdout NLL over `ln T`: a coarse grid picks the
/// best bracket, then golden-section search narrows it to `cfg.tolerance`.
pub fn fit_temperature(holdout: &LogitMatrix, cfg: &FitConfig) -> Result<Temperature> {
    cfg.validate()?;
    if holdout.is_empty() {
        return Err(Error::InvalidInput("empty holdout set".into()));
    }
    let objective = |log_t: f64| -> Result<f64> {
        let v = nll_at(holdout, log_t.exp());
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric(format!("non-finite NLL at T = {}", log_t.exp())))
        }
    };

    let (lo, hi) = (cfg.log_t_lower, cfg.log_t_upper);
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let grid_x = |i: usize| if i == GRID_POINTS - 1 { hi } else { lo + step * i as f64 };
    let mut best = (0, f64::INFINITY);
    for i in 0..GRID_POINTS {
        let v = objective(grid_x(i))?;
        if v < best.1 {
            best = (i, v);
        }
    }
    let mut a = grid_x(best.0.saturating_sub(1));
    let mut b = grid_x((best.0 + 1).min(GRID_POINTS - 1));

    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = objective(x1)?;
    let mut f2 = objective(x2)?;
    let mut iterations = 0;
    while b - a > cfg.tolerance && iterations < cfg.max_iterations {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = objective(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = objective(x2)?;
        }
        iterations += 1;
    }

    // The bracket midpoint, unless a probed point or the grid did better.
    let mid = 0.5 * (a + b);
    let mut candidates = [(mid, objective(mid)?), (x1, f1), (x2, f2), (grid_x(best.0), best.1)];
    candidates.sort_by(|p, q| p.1.total_cmp(&q.1));
    let (log_t, value) = candidates[0];
    Ok(Temperature {
        value: log_t.exp(),
        nll_at_fit: value,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: f64) -> Temperature {
        Temperature::new(v).unwrap()
    }

    #[test]
    fn softmax_closed_forms() {
        let e2 = 2f64.exp();
        let p = softmax_with_temperature(&[2.0, 0.0], &t(1.0)).unwrap();
        assert!((p[0] - e2 / (e2 + 1.0)).abs() < 1e-15);
        assert!((p[1] - 1.0 / (e2 + 1.0)).abs() < 1e-15);
        assert!((p[0] - 0.8808).abs() < 1e-4);

        let e1 = 1f64.exp();
        let p = softmax_with_temperature(&[2.0, 0.0], &t(2.0)).unwrap();
        assert!((p[0] - e1 / (e1 + 1.0)).abs() < 1e-15);
        assert!((p[0] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn softmax_softening_limit() {
        let p = softmax_with_temperature(&[5.0, -3.0, 1.0, 40.0], &t(1e6)).unwrap();
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-5));
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let p = softmax_with_temperature(&[1000.0, 999.0], &t(1.0)).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > p[1]);
    }

    #[test]
    fn softmax_rejects_bad_inputs() {
        assert!(softmax_with_temperature(&[f64::NAN, 0.0], &t(1.0)).is_err());
        let bad = Temperature {
            value: 0.0,
            nll_at_fit: 0.0,
            iterations: 0,
        };
        assert!(softmax_with_temperature(&[1.0, 0.0], &bad).is_err());
        assert!(Temperature::new(-1.0).is_err());
    }

    #[test]
    fn nll_closed_forms() {
        let uniform = LogitMatrix::from_rows(&[vec![0.0, 0.0]], &[1]).unwrap();
        for temp in [0.1, 1.0, 7.0] {
            assert!((nll(&uniform, &t(temp)).unwrap() - 2f64.ln()).abs() < 1e-15);
        }
        let m = LogitMatrix::from_rows(&[vec![1.0, 0.0]], &[0]).unwrap();
        let expected = (1.0 + (-1f64).exp()).ln();
        assert!((nll(&m, &t(1.0)).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.3133).abs() < 1e-4);

        let m = LogitMatrix::from_rows(&[vec![3.0, -1.0, 0.5], vec![0.0, 2.0, 1.0]], &[0, 2]).unwrap();
        assert!((nll(&m, &t(1e7)).unwrap() - 3f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn identity_temperature_is_plain_softmax() {
        let m = LogitMatrix::from_rows(&[vec![0.3, -1.2, 2.0], vec![1.0, 1.0, 0.0]], &[2, 0]).unwrap();
        let p = scale_probabilities(&m, &Temperature::identity()).unwrap();
        for i in 0..2 {
            let z = m.row(i);
            let s: f64 = z.iter().map(|v| v.exp()).sum();
            for (j, &v) in z.iter().enumerate() {
                assert!((p.row(i)[j] - v.exp() / s).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn logit_matrix_validation() {
        assert!(LogitMatrix::from_rows(&[vec![1.0, f64::INFINITY]], &[0]).is_err());
        assert!(LogitMatrix::from_rows(&[vec![1.0, 0.0]], &[2]).is_err());
        assert!(LogitMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0]], &[0, 0]).is_err());
    }

    #[test]
    fn fit_rejects_empty_holdout_and_bad_config() {
        let empty = LogitMatrix::new(3, vec![], vec![], vec![]).unwrap();
        assert!(fit_temperature(&empty, &FitConfig::default()).is_err());
        let m = LogitMatrix::from_rows(&[vec![1.0, 0.0]], &[0]).unwrap();
        let cfg = FitConfig {
            log_t_lower: 1.0,
            log_t_upper: 0.0,
            ..FitConfig::default()
        };
        assert!(matches!(fit_temperature(&m, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn fit_is_deterministic_and_beats_endpoints() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let x = i as f64;
                vec![(x * 0.37).sin() * 4.0, (x * 0.11).cos() * 3.0, (x * 0.7).sin()]
            })
            .collect();
        let labels: Vec<usize> = (0..50).map(|i| (i * 7 % 5) % 3).collect();
        let m = LogitMatrix::from_rows(&rows, &labels).unwrap();
        let cfg = FitConfig::default();
        let a = fit_temperature(&m, &cfg).unwrap();
        let b = fit_temperature(&m, &cfg).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert!(a.nll_at_fit <= nll(&m, &t(0.05)).unwrap());
        assert!(a.nll_at_fit <= nll(&m, &t(20.0)).unwrap());
        assert!(a.iterations > 0);
    }
}
