use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{backward, predict_utterance, LossConfig, Sample};
use super::params::{init_params, NetworkParams};
use super::NetworkSpec;
use crate::dataset::Task;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::metrics::{ccc, pearson_cc, MomentStats};

fn default_momentum() -> f64 {
    0.9
}
fn default_patience() -> usize {
    15
}
fn default_clip() -> f64 {
    5.0
}
fn default_batch() -> usize {
    16
}

/// Optimizer and stopping settings for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Utterances per gradient step.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub adversarial_lambda: f64,
    #[serde(default)]
    pub task_weights: BTreeMap<Task, f64>,
    /// Global gradient-norm ceiling.
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
    /// Task monitored for early stopping; defaults to the first regression
    /// head.
    #[serde(default)]
    pub primary_task: Option<Task>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: default_momentum(),
            max_epochs: 100,
            patience: default_patience(),
            batch_size: default_batch(),
            seed: 0,
            adversarial_lambda: 0.0,
            task_weights: BTreeMap::new(),
            clip_norm: default_clip(),
            primary_task: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be a positive number");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.adversarial_lambda >= 0.0 && self.adversarial_lambda.is_finite()) {
            return bad("adversarial_lambda must be a non-negative number");
        }
        if self.task_weights.values().any(|w| !w.is_finite()) {
            return bad("task_weights must be finite");
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            task_weights: self.task_weights.clone(),
            adversarial_lambda: self.adversarial_lambda,
        }
    }
}

/// Patience-based stopping on a score that should increase.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    since: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            since: 0,
        }
    }

    /// Records the score of `epoch`. Returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, score: f64) -> (bool, bool) {
        if score > self.best {
            self.best = score;
            self.best_epoch = epoch;
            self.since = 0;
            (true, false)
        } else {
            self.since += 1;
            (false, self.since >= self.patience)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_cc: f64,
    pub val_ccc: f64,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_cc,val_ccc";

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    for r in history {
        out.push_str(&format!(
            "{},{:?},{:?},{:?}\n",
            r.epoch, r.train_loss, r.val_cc, r.val_ccc
        ));
    }
    out
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    write_atomic(path, history_csv(history).as_bytes())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub params: NetworkParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Splits a shuffled order into batches, folding a trailing single
/// utterance into the previous batch.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * size;
        *out.last_mut().expect("at least one batch") = &order[start..];
    }
    out
}

fn validation_scores(params: &NetworkParams, val: &[Sample<'_>], task: Task, refs: &[f64]) -> Result<(f64, f64)> {
    let preds = val
        .iter()
        .map(|s| Ok(predict_utterance(params, s.inputs)?[&task]))
        .collect::<Result<Vec<f64>>>()?;
    if preds.iter().any(|p| !p.is_finite()) {
        return Ok((f64::NAN, f64::NAN));
    }
    let cc = pearson_cc(&preds, refs).unwrap_or(0.0);
    Ok((cc, ccc(&preds, refs)?))
}

/// Trains one network with momentum SGD on shuffled utterance batches,
/// keeping the parameters of the epoch with the best validation CCC.
///
/// Batches whose targets are all equal have no defined CCC and are skipped.
pub fn train_fold(
    train: &[Sample<'_>],
    val: &[Sample<'_>],
    spec: &NetworkSpec,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    spec.validate()?;
    config.validate()?;
    if train.len() < 2 {
        return Err(Error::TooShort("training needs at least 2 utterances".into()));
    }
    if val.len() < 2 {
        return Err(Error::TooShort("validation needs at least 2 utterances".into()));
    }
    let tasks = spec.regression_tasks();
    let task = match config.primary_task {
        Some(t) if tasks.contains(&t) => t,
        Some(t) => return Err(Error::Config(format!("primary_task {t} has no head in the network"))),
        None => tasks[0],
    };
    if config.adversarial_lambda > 0.0 && spec.speaker_head().is_none() {
        return Err(Error::Config("adversarial_lambda > 0 needs a speaker head".into()));
    }
    let refs = val
        .iter()
        .map(|s| {
            s.targets
                .get(task)
                .ok_or_else(|| Error::Validation(format!("validation utterance without a {task} label")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if MomentStats::of(&refs)?.variance == 0.0 {
        return Err(Error::degenerate(format!("constant {task} labels in the validation set")));
    }

    let loss_cfg = config.loss_config();
    let mut params = init_params(spec, config.seed)?;
    let mut velocity = params.zeros_like();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopping = EarlyStopping::new(config.patience);
    let mut best = params.clone();
    let mut history = Vec::new();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        for batch_idx in batches(&order, config.batch_size) {
            let batch: Vec<Sample<'_>> = batch_idx.iter().map(|&i| train[i]).collect();
            let (loss, mut grad) = match backward(&params, &batch, &loss_cfg) {
                Err(Error::Degenerate(_)) => continue,
                other => other?,
            };
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            let norm = grad.norm();
            if !norm.is_finite() {
                return Err(Error::Divergence { epoch, loss: norm });
            }
            if norm > config.clip_norm {
                grad.scale(config.clip_norm / norm);
            }
            velocity.scale(config.momentum);
            velocity.add_scaled(&grad, -config.learning_rate);
            params.add_scaled(&velocity, 1.0);
            loss_sum += loss;
            steps += 1;
        }
        if steps == 0 {
            return Err(Error::degenerate("every training batch has constant targets"));
        }
        let (val_cc, val_ccc) = validation_scores(&params, val, task, &refs)?;
        if !val_ccc.is_finite() || !params.is_finite() {
            return Err(Error::Divergence { epoch, loss: val_ccc });
        }
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / steps as f64,
            val_cc,
            val_ccc,
        });
        let (improved, stop) = stopping.observe(epoch, val_ccc);
        if improved {
            best = params.clone();
        }
        if stop {
            break;
        }
    }
    Ok(TrainOutcome {
        params: best,
        history,
        best_epoch: stopping.best_epoch,
    })
}
