//! Cross-validated training with SGD + momentum and a cosine schedule.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{batch_gradient, init_model, preprocess, forward_input, ModelConfig, ModelParams};
use crate::augment::{mix64, training_pipeline, AugmentParams, RngStream, Variant};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::metrics::argmax;
use crate::par::Exec;
use crate::scaling::LogitMatrix;
use crate::synth::id_hash;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Set from the experiment's root seed, never from the config file.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 8,
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("train.epochs and train.batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return Err(Error::Config(format!(
                "invalid optimizer settings: lr {}, momentum {}, weight decay {}",
                self.learning_rate, self.momentum, self.weight_decay
            )));
        }
        Ok(())
    }

    /// Cosine-decayed learning rate for a 0-based epoch.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let progress = epoch as f64 / self.epochs as f64;
        0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

/// One labelled training image with its cross-validation fold.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub id: String,
    pub label: usize,
    pub fold: usize,
    pub image: ImageBuffer,
    /// Images standing in for this sample while its fold is held out,
    /// each with its own row id. Empty means the clean image under `id`.
    pub validation: Vec<(String, ImageBuffer)>,
}

impl TrainSample {
    fn validation_views(&self) -> Vec<(&str, &ImageBuffer)> {
        if self.validation.is_empty() {
            vec![(self.id.as_str(), &self.image)]
        } else {
            self.validation.iter().map(|(id, img)| (id.as_str(), img)).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub epoch_losses: Vec<f64>,
    pub val_accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub format_version: u32,
    pub variant: Variant,
    pub epochs: usize,
    /// Mean cross-entropy of the initialized model on the clean training images.
    pub initial_loss: f64,
    pub folds: Vec<FoldReport>,
    /// Validation accuracy of each fold's model at the chosen epoch budget.
    pub fold_accuracies: Vec<f64>,
    pub best_fold: usize,
    pub epoch_budget: usize,
    pub final_epoch_losses: Vec<f64>,
    pub final_train_accuracy: f64,
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub report: TrainReport,
    /// Pooled out-of-fold validation logits at the chosen epoch budget.
    pub holdout: LogitMatrix,
}

const INIT_KEY: u64 = 0x69_6e_69_74;

struct Run<'a> {
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    augment: &'a AugmentParams,
    variant: Variant,
    exec: Exec,
}

struct RunResult {
    params: ModelParams,
    epoch_losses: Vec<f64>,
    val_accuracies: Vec<f64>,
    /// Validation logits per epoch, rows in `val` order.
    val_logits: Vec<Vec<Vec<f64>>>,
}

impl Run<'_> {
    fn stream(&self, run: u64) -> RngStream {
        RngStream::new(self.train.seed, mix64(run ^ ((self.variant as u64 + 1) << 32)))
    }

    fn execute(&self, run: u64, train: &[&TrainSample], val: &[(Vec<f64>, usize)], epochs: usize) -> Result<RunResult> {
        if train.is_empty() {
            return Err(Error::InvalidInput(format!("run {run} has an empty training set")));
        }
        let base = self.stream(run);
        let mut params = init_model(self.model, mix64(self.train.seed ^ INIT_KEY))?;
        let mut velocity = vec![0.0; params.len()];
        let mut epoch_losses = Vec::with_capacity(epochs);
        let mut val_accuracies = Vec::with_capacity(epochs);
        let mut val_logits = Vec::with_capacity(epochs);

        for epoch in 0..epochs {
            let epoch_stream = base.derive(epoch as u64);
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut epoch_stream.rng());
            let lr = self.train.learning_rate_at(epoch);
            let mut loss_sum = 0.0;
            for batch in order.chunks(self.train.batch_size) {
                let inputs = self.exec.try_map_range(batch.len(), |b| {
                    let s = train[batch[b]];
                    let img = training_pipeline(&s.image, self.variant, self.augment, &epoch_stream.derive(id_hash(&s.id)))?;
                    Ok::<_, Error>(preprocess(&img, self.model))
                })?;
                let labels: Vec<usize> = batch.iter().map(|&i| train[i].label).collect();
                let (loss, grad) = batch_gradient(&params, self.model, &inputs, &labels, 1.0, self.exec);
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!(
                        "training diverged: non-finite loss in run {run}, epoch {}",
                        epoch + 1
                    )));
                }
                loss_sum += loss * batch.len() as f64;
                for ((w, v), g) in params.values.iter_mut().zip(&mut velocity).zip(&grad) {
                    *v = self.train.momentum * *v + g + self.train.weight_decay * *w;
                    *w -= lr * *v;
                }
            }
            epoch_losses.push(loss_sum / train.len() as f64);

            if !val.is_empty() {
                let logits = self.exec.try_map_range(val.len(), |i| forward_input(&params, self.model, &val[i].0))?;
                let correct = logits.iter().zip(val).filter(|(z, (_, y))| argmax(z).0 == *y).count();
                val_accuracies.push(correct as f64 / val.len() as f64);
                val_logits.push(logits);
            }
        }
        Ok(RunResult {
            params,
            epoch_losses,
            val_accuracies,
            val_logits,
        })
    }
}

/// Trains one model per fold (validating on the held-out fold), picks the
/// epoch budget from the best fold, pools the out-of-fold validation logits
/// at that budget as the calibration holdout, and retrains on every sample
/// for the chosen budget.
pub fn train(
    samples: &[TrainSample],
    model: &ModelConfig,
    cfg: &TrainConfig,
    augment: &AugmentParams,
    variant: Variant,
    exec: Exec,
) -> Result<TrainOutcome> {
    model.validate()?;
    cfg.validate()?;
    augment.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidInput("no training samples".into()));
    }
    let num_folds = samples.iter().map(|s| s.fold).max().unwrap_or(0) + 1;
    for f in 0..num_folds {
        if !samples.iter().any(|s| s.fold == f) {
            return Err(Error::InvalidInput(format!("fold {f} is empty")));
        }
    }
    if let Some(s) = samples.iter().find(|s| s.label >= model.num_classes) {
        return Err(Error::InvalidInput(format!("sample {} has label {} outside the model's classes", s.id, s.label)));
    }
    let run = Run {
        model,
        train: cfg,
        augment,
        variant,
        exec,
    };

    let clean: Vec<Vec<f64>> = exec.map(samples, |s| preprocess(&s.image, model));
    let init = init_model(model, mix64(cfg.seed ^ INIT_KEY))?;
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let initial_loss = super::network::batch_loss(&init, model, &clean, &labels);

    let mut folds = Vec::with_capacity(num_folds);
    let mut runs = Vec::with_capacity(num_folds);
    for f in 0..num_folds {
        let train_set: Vec<&TrainSample> = samples.iter().filter(|s| s.fold != f).collect();
        let views: Vec<(&str, &ImageBuffer, usize)> = samples
            .iter()
            .filter(|s| s.fold == f)
            .flat_map(|s| s.validation_views().into_iter().map(move |(id, img)| (id, img, s.label)))
            .collect();
        let val = exec.map(&views, |(_, img, label)| (preprocess(img, model), *label));
        let result = run.execute(f as u64, &train_set, &val, cfg.epochs)?;
        folds.push(FoldReport {
            fold: f,
            train_size: train_set.len(),
            val_size: val.len(),
            epoch_losses: result.epoch_losses.clone(),
            val_accuracies: result.val_accuracies.clone(),
        });
        runs.push((views, result));
    }

    // Best fold by peak validation accuracy; its latest peak epoch is the budget.
    let peak = |accs: &[f64]| {
        let best = accs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let epoch = accs.iter().rposition(|&a| a == best).unwrap_or(0);
        (best, epoch)
    };
    let mut best_fold = 0;
    for f in 1..num_folds {
        if peak(&folds[f].val_accuracies).0 > peak(&folds[best_fold].val_accuracies).0 {
            best_fold = f;
        }
    }
    let budget_idx = peak(&folds[best_fold].val_accuracies).1;
    let epoch_budget = budget_idx + 1;

    // Holdout rows follow fold order, then sample order within the fold.
    let mut fold_accuracies = Vec::with_capacity(num_folds);
    let (mut logits, mut holdout_labels, mut holdout_ids) = (Vec::new(), Vec::new(), Vec::new());
    for (views, result) in &runs {
        fold_accuracies.push(result.val_accuracies[budget_idx]);
        for (row, (id, _, label)) in result.val_logits[budget_idx].iter().zip(views) {
            logits.extend_from_slice(row);
            holdout_labels.push(*label);
            holdout_ids.push(id.to_string());
        }
    }
    let holdout = LogitMatrix::new(model.num_classes, logits, holdout_labels, holdout_ids)?;

    let everything: Vec<&TrainSample> = samples.iter().collect();
    let final_run = run.execute(num_folds as u64, &everything, &[], epoch_budget)?;
    let final_logits = exec.try_map(&clean, |x| forward_input(&final_run.params, model, x))?;
    let final_correct = final_logits.iter().zip(&labels).filter(|(z, &y)| argmax(z).0 == y).count();

    Ok(TrainOutcome {
        report: TrainReport {
            format_version: 1,
            variant,
            epochs: cfg.epochs,
            initial_loss,
            folds,
            fold_accuracies,
            best_fold,
            epoch_budget,
            final_epoch_losses: final_run.epoch_losses,
            final_train_accuracy: final_correct as f64 / samples.len() as f64,
        },
        params: final_run.params,
        holdout,
    })
}
