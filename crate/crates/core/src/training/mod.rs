//! Mini-batch Adam training with early stopping.

pub mod adam;
pub mod checkpoint;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;
use crate::datasets::metrics::EvalReport;
use crate::embedding::{EmbeddingTable, Vocab};
use crate::frontend::Label;
use crate::model::{cross_entropy, objective_and_gradient, predict, ModelError, ModelParams, Sample};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CheckpointError, RngState};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset contains only one label")]
    SingleClassDataset,
    #[error("{0} samples are too few for a train/validation split")]
    TooFewSamples(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub val_f1: f64,
}

pub fn metrics_csv(rows: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,val_acc,val_f1\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.val_acc, r.val_f1);
    }
    out
}

/// Seeded shuffle of `0..n` cut at `floor(fraction * n)`.
pub fn split_indices(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let cut = (fraction * n as f64).floor() as usize;
    let val = idx.split_off(cut);
    (idx, val)
}

/// Probabilities and metrics of `params` on `samples`.
pub fn evaluate_samples(
    params: &ModelParams,
    cfg: &RunConfig,
    samples: &[&Sample],
) -> Result<(Vec<f64>, EvalReport), ModelError> {
    let probs = samples.par_iter().map(|s| predict(params, cfg, s)).collect::<Result<Vec<_>, _>>()?;
    let labels = samples.iter().map(|s| s.label.ok_or(ModelError::MissingLabel)).collect::<Result<Vec<_>, _>>()?;
    let report = EvalReport::from_probabilities(&labels, &probs);
    Ok((probs, report))
}

fn mean_cross_entropy(probs: &[f64], samples: &[&Sample]) -> f64 {
    let total: f64 = probs.iter().zip(samples).map(|(&p, s)| cross_entropy(p, s.label.expect("checked"))).sum();
    total / probs.len() as f64
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot with the best validation F1.
    pub best: Checkpoint,
    pub metrics: Vec<EpochMetrics>,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
    pub epochs_run: usize,
}

/// Trains on a seeded split of `samples`. `threads` only affects speed.
pub fn train(
    samples: &[Sample],
    cfg: &RunConfig,
    vocab: &Vocab,
    table: &EmbeddingTable,
    threads: usize,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate().map_err(ModelError::from)?;
    if samples.iter().any(|s| s.label.is_none()) {
        return Err(ModelError::MissingLabel.into());
    }
    let has = |l: Label| samples.iter().any(|s| s.label == Some(l));
    if !(has(Label::Vulnerable) && has(Label::Benign)) {
        return Err(TrainError::SingleClassDataset);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| TrainError::ThreadPool(e.to_string()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train_idx, val_idx) = split_indices(samples.len(), cfg.train_fraction, &mut rng);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(TrainError::TooFewSamples(samples.len()));
    }
    let val: Vec<&Sample> = val_idx.iter().map(|&i| &samples[i]).collect();

    let mut params = ModelParams::init(cfg, Some(table), &mut rng)?;
    let mut adam = AdamState::new(&params);
    let adam_cfg =
        AdamConfig { learning_rate: cfg.learning_rate, beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.adam_eps };

    let mut metrics = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let mut best_val_loss = f64::INFINITY;
    let mut stale = 0;
    let mut order = train_idx.clone();

    pool.install(|| -> Result<(), TrainError> {
        for epoch in 1..=cfg.max_epochs {
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                let refs: Vec<&Sample> = batch.iter().map(|&i| &samples[i]).collect();
                let (loss, grads) = objective_and_gradient(&params, cfg, &refs)?;
                loss_sum += loss * refs.len() as f64;
                adam_step(&mut params, &grads, &mut adam, adam_cfg);
            }
            let train_loss = loss_sum / order.len() as f64;
            let (probs, report) = evaluate_samples(&params, cfg, &val)?;
            let val_loss = mean_cross_entropy(&probs, &val);
            log::info!(
                "epoch {epoch}: train_loss {train_loss:.5} val_loss {val_loss:.5} val_acc {:.4} val_f1 {:.4}",
                report.accuracy,
                report.f1
            );
            metrics.push(EpochMetrics { epoch, train_loss, val_loss, val_acc: report.accuracy, val_f1: report.f1 });

            if best.as_ref().map_or(true, |b| report.f1 > b.best_metric) {
                best = Some(Checkpoint {
                    config: cfg.clone(),
                    vocab: vocab.clone(),
                    table: table.clone(),
                    params: params.clone(),
                    adam: adam.clone(),
                    epoch: epoch as u64,
                    best_metric: report.f1,
                    rng: RngState::capture(&rng),
                });
            }
            if val_loss < best_val_loss {
                best_val_loss = val_loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
        Ok(())
    })?;

    Ok(TrainOutcome {
        best: best.expect("at least one epoch runs"),
        epochs_run: metrics.len(),
        metrics,
        train_indices: train_idx,
        val_indices: val_idx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (t, v) = split_indices(10, 0.75, &mut rng);
        assert_eq!((t.len(), v.len()), (7, 3));
        let mut all: Vec<_> = t.iter().chain(&v).copied().collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn csv_header() {
        let csv = metrics_csv(&[EpochMetrics { epoch: 1, train_loss: 0.5, val_loss: 0.25, val_acc: 1.0, val_f1: 1.0 }]);
        assert_eq!(csv, "epoch,train_loss,val_loss,val_acc,val_f1\n1,0.5,0.25,1,1\n");
    }
}
