use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig};
use super::layers::DropoutMode;
use super::loss::softmax_cross_entropy;
use super::model::{FeatureBatch, ModelState};
use super::rng::stream;
use super::Real;
use crate::corpus::{EncodedSet, TokenBatch};
use crate::error::{Error, Result};
use crate::evaluation::{metrics, Metrics, ScoredPrediction};
use crate::metric::{metric_loss, ClassPartition, MetricConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 30,
            patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be >= 2".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("invalid Adam hyperparameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_ce: f64,
    pub train_metric: f64,
    pub valid_accuracy: f64,
    pub valid_micro_f1: f64,
    pub valid_macro_f1: f64,
    pub skipped_inter_batches: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelState<f32>,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

/// Index of the largest entry; ties go to the lower index.
pub fn argmax<T: PartialOrd + Copy>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Deterministic class predictions.
pub fn predict<T: Real>(model: &ModelState<T>, tokens: &TokenBatch) -> Result<Vec<usize>> {
    let logits = model.logits(tokens)?;
    Ok((0..logits.rows()).map(|i| argmax(logits.row(i))).collect())
}

pub fn evaluate_model<T: Real>(model: &ModelState<T>, set: &EncodedSet) -> Result<Metrics> {
    let preds = predict(model, &set.tokens)?;
    let scored: Vec<ScoredPrediction> = preds
        .iter()
        .zip(&set.labels)
        .zip(&set.instance_ids)
        .map(|((&p, &y), id)| ScoredPrediction {
            instance_id: id.clone(),
            predicted_class: p,
            true_class: y,
            score: 0.0,
        })
        .collect();
    metrics(&scored)
}

/// Mini-batch Adam on cross-entropy plus, when `metric` is given, the
/// metric loss on the post-dropout features. Early-stops on validation
/// micro-F1 and returns the best checkpoint. A pure function of its inputs.
pub fn train(
    mut model: ModelState<f32>,
    train_set: &EncodedSet,
    valid_set: &EncodedSet,
    cfg: &TrainConfig,
    metric: Option<&MetricConfig>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if let Some(m) = metric {
        m.validate()?;
    }
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::Dataset("training and validation sets must be non-empty".into()));
    }
    let adam = cfg.adam();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(f64, usize, ModelState<f32>)> = None;
    let mut since_best = 0;
    let mut log = Vec::new();
    model.zero_grad();

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut stream(cfg.seed, &[1, epoch as u64]));
        let (mut ce_sum, mut metric_sum, mut batches, mut skipped) = (0.0, 0.0, 0usize, 0usize);
        for (bi, rows) in order.chunks(cfg.batch_size).enumerate() {
            let tokens = train_set.tokens.select(rows);
            let labels: Vec<usize> = rows.iter().map(|&r| train_set.labels[r]).collect();
            let mut rng = stream(cfg.seed, &[2, epoch as u64, bi as u64]);
            let out = model.forward(&tokens, DropoutMode::TrainStochastic, &mut rng)?;
            let (ce, dlogits) = softmax_cross_entropy(&out.logits, &labels)?;
            if !ce.is_finite() {
                return Err(Error::NonFiniteGradient(format!("loss at epoch {epoch} batch {bi}")));
            }
            let dfeatures = match metric {
                Some(mc) => {
                    let batch = FeatureBatch::new(out.features, labels.clone())?;
                    let part = ClassPartition::from_labels(&labels);
                    let mo = metric_loss(&batch, &part, mc);
                    if mo.inter_skipped {
                        skipped += 1;
                        log::warn!("epoch {epoch} batch {bi}: single class present, inter-class term skipped");
                    }
                    metric_sum += mo.loss as f64;
                    Some(mo.grad)
                }
                None => None,
            };
            model.backward(&out.cache, &dlogits, dfeatures.as_ref())?;
            adam_step(&mut model.parameters_mut(), &adam)?;
            ce_sum += ce as f64;
            batches += 1;
        }
        let vm = evaluate_model(&model, valid_set)?;
        let entry = EpochLog {
            epoch,
            train_ce: ce_sum / batches as f64,
            train_metric: metric_sum / batches as f64,
            valid_accuracy: vm.accuracy,
            valid_micro_f1: vm.micro_f1,
            valid_macro_f1: vm.macro_f1,
            skipped_inter_batches: skipped,
        };
        log::info!(
            "epoch {epoch}: ce {:.4} metric {:.4} valid micro-F1 {:.4} ({:.1}s)",
            entry.train_ce,
            entry.train_metric,
            entry.valid_micro_f1,
            started.elapsed().as_secs_f64()
        );
        log.push(entry);
        if best.as_ref().is_none_or(|(score, _, _)| vm.micro_f1 > *score) {
            best = Some((vm.micro_f1, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (_, best_epoch, mut best_model) = best.expect("at least one epoch ran");
    best_model.zero_grad();
    Ok(TrainOutcome {
        model: best_model,
        best_epoch,
        log,
    })
}

pub fn write_log_csv<W: std::io::Write>(log: &[EpochLog], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in log {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::Evaluation(e.to_string()))?;
    Ok(())
}
