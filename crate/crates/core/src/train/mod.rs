//! Mini-batch training with Adam, seeded per-epoch shuffling, early stopping
//! on validation loss, and resumable checkpoints.
//!
//! Gradients for a batch are computed over fixed-size chunks (optionally in
//! parallel) and summed in chunk order, so results do not depend on the
//! number of worker threads.

pub mod adam;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};

use crate::error::{Error, Result};
use crate::loss::{composite_loss, LossConfig};
use crate::nn::{Checkpoint, ModelConfig, ModelParams};
use crate::scalar::{mix_seed, Scalar};
use crate::stamp::RunStamp;

pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LOG_FILE: &str = "log.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub loss: LossConfig,
    pub checkpoint_dir: Option<PathBuf>,
    /// Samples per gradient chunk.
    pub chunk_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 0,
            patience: 20,
            loss: LossConfig::default(),
            checkpoint_dir: None,
            chunk_size: 4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 || self.chunk_size == 0 {
            return Err(Error::InvalidArgument(
                "epochs, batch_size, patience and chunk_size must be positive".into(),
            ));
        }
        if !(a.learning_rate > 0.0 && a.eps > 0.0) {
            return Err(Error::InvalidArgument("learning rate and eps must be positive".into()));
        }
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2)) {
            return Err(Error::InvalidArgument("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One training example: scaled features and its flattened `(bands, L)` target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub features: Vec<T>,
    pub target: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSet<T> {
    pub train: Vec<Sample<T>>,
    pub val: Vec<Sample<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// dB-domain MSE part of the training loss.
    pub train_level: f64,
    pub val_loss: f64,
    pub val_level: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub stopped_early: bool,
}

/// Decision after one validation loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops after `patience` consecutive epochs without a strictly lower loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: Option<f64>,
    pub best_epoch: Option<usize>,
    pub since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            best_epoch: None,
            since_best: 0,
        }
    }

    pub fn update(&mut self, epoch: usize, loss: f64) -> StopDecision {
        if self.best.is_none_or(|b| loss < b) {
            self.best = Some(loss);
            self.best_epoch = Some(epoch);
            self.since_best = 0;
            return StopDecision::Improved;
        }
        self.since_best += 1;
        if self.since_best >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ResumeState {
    epochs_done: usize,
    early: EarlyStopping,
    log: TrainLog,
}

struct BatchResult<T> {
    grads: ModelParams<T>,
    loss: f64,
    level: f64,
}

fn chunk_gradients<T: Scalar>(
    params: &ModelParams<T>,
    samples: &[&Sample<T>],
    loss_cfg: &LossConfig,
) -> Result<BatchResult<T>> {
    let bands = params.config.bands;
    let mut grads = ModelParams::zeros(&params.config)?;
    let (mut loss, mut level) = (0.0, 0.0);
    for s in samples {
        let cache = params.forward(&s.features)?;
        let (l, g) = composite_loss(cache.output(), &s.target, bands, loss_cfg)?;
        params.backward(&cache, &g, &mut grads)?;
        loss += l.total.as_f64();
        level += l.level.as_f64();
    }
    Ok(BatchResult { grads, loss, level })
}

/// Mean gradient and summed losses over `batch`, reduced in chunk order.
fn batch_gradients<T: Scalar>(
    params: &ModelParams<T>,
    batch: &[&Sample<T>],
    cfg: &TrainConfig,
) -> Result<BatchResult<T>> {
    let parts: Vec<Result<BatchResult<T>>> = batch
        .par_chunks(cfg.chunk_size)
        .map(|c| chunk_gradients(params, c, &cfg.loss))
        .collect();
    let mut iter = parts.into_iter();
    let mut acc = iter.next().expect("non-empty batch")?;
    for p in iter {
        let p = p?;
        acc.grads.add_assign(&p.grads)?;
        acc.loss += p.loss;
        acc.level += p.level;
    }
    let inv = T::lit(1.0 / batch.len() as f64);
    for t in acc.grads.tensors_mut() {
        t.scale(inv);
    }
    Ok(acc)
}

/// Mean `(total, level)` loss over `samples`.
pub fn mean_loss<T: Scalar>(
    params: &ModelParams<T>,
    samples: &[Sample<T>],
    loss_cfg: &LossConfig,
) -> Result<(f64, f64)> {
    let parts: Vec<Result<(f64, f64)>> = samples
        .par_iter()
        .map(|s| {
            let y = params.predict(&s.features)?;
            let (l, _) = composite_loss(&y, &s.target, params.config.bands, loss_cfg)?;
            Ok((l.total.as_f64(), l.level.as_f64()))
        })
        .collect();
    let (mut a, mut b) = (0.0, 0.0);
    for p in parts {
        let (x, y) = p?;
        a += x;
        b += y;
    }
    let n = samples.len().max(1) as f64;
    Ok((a / n, b / n))
}

fn check_shapes<T: Scalar>(set: &TrainSet<T>, model: &ModelConfig) -> Result<()> {
    if set.train.is_empty() || set.val.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "training needs non-empty train and val splits (got {} and {})",
            set.train.len(),
            set.val.len()
        )));
    }
    let out = model.bands * model.out_len;
    for s in set.train.iter().chain(&set.val) {
        if s.features.len() != model.input_dim || s.target.len() != out {
            return Err(Error::shape(
                format!("{} features -> ({}, {}) curves", model.input_dim, model.bands, model.out_len),
                format!("{} features -> {} values", s.features.len(), s.target.len()),
            ));
        }
    }
    Ok(())
}

fn write_log(dir: &Path, log: &TrainLog) -> Result<()> {
    std::fs::write(dir.join(LOG_FILE), serde_json::to_vec_pretty(log)?)?;
    Ok(())
}

fn merge_extra(extra: &serde_json::Value, state: &ResumeState) -> Result<serde_json::Value> {
    let mut obj = match extra {
        serde_json::Value::Object(m) => m.clone(),
        serde_json::Value::Null => serde_json::Map::new(),
        other => {
            let mut m = serde_json::Map::new();
            m.insert("user".into(), other.clone());
            m
        }
    };
    // wall-clock timings stay in log.json so checkpoints are reproducible
    let mut state = state.clone();
    for e in &mut state.log.epochs {
        e.seconds = 0.0;
    }
    obj.insert("training".into(), serde_json::to_value(&state)?);
    Ok(serde_json::Value::Object(obj))
}

/// Trains a model and returns the parameters of the best validation epoch.
///
/// With `cfg.checkpoint_dir` set, `last.ckpt`, `best.ckpt` and `log.json`
/// are written after every epoch, and an existing `last.ckpt` in that
/// directory is resumed when `resume` is true. `extra` is stored in every
/// checkpoint header.
pub fn train<T: Scalar>(
    set: &TrainSet<T>,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    extra: &serde_json::Value,
    resume: bool,
) -> Result<(ModelParams<T>, TrainLog)> {
    cfg.validate()?;
    model_cfg.validate()?;
    cfg.loss.validate(model_cfg.out_len)?;
    check_shapes(set, model_cfg)?;
    let dir = cfg.checkpoint_dir.as_deref();
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
    }

    let mut params;
    let mut adam;
    let mut best;
    let mut state;
    let last_path = dir.map(|d| d.join(LAST_CHECKPOINT));
    match last_path.as_ref().filter(|p| resume && p.exists()) {
        Some(path) => {
            let ck = Checkpoint::<T>::load(path)?;
            if ck.params.config != *model_cfg {
                return Err(Error::Validation(format!(
                    "checkpoint {} was trained with a different architecture",
                    path.display()
                )));
            }
            state = serde_json::from_value::<ResumeState>(
                ck.extra.get("training").cloned().unwrap_or_default(),
            )
            .map_err(|e| Error::format(path, format!("missing training state: {e}")))?;
            params = ck.params;
            adam = ck.optimizer.ok_or_else(|| Error::format(path, "no optimizer state"))?;
            best = Checkpoint::<T>::load(&dir.expect("dir").join(BEST_CHECKPOINT))?.params;
            log::info!("resuming after epoch {}", state.epochs_done);
        }
        None => {
            params = ModelParams::init(model_cfg, cfg.seed)?;
            adam = AdamState::new(model_cfg)?;
            best = params.clone();
            state = ResumeState {
                epochs_done: 0,
                early: EarlyStopping::new(cfg.patience),
                log: TrainLog::default(),
            };
        }
    }
    state.early.patience = cfg.patience;

    let stamp = RunStamp::new(
        &(model_cfg, TrainConfig { checkpoint_dir: None, ..cfg.clone() }),
        cfg.seed,
    );
    let mut order: Vec<usize> = (0..set.train.len()).collect();
    while state.epochs_done < cfg.epochs && !state.log.stopped_early {
        let epoch = state.epochs_done;
        let started = Instant::now();
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, epoch as u64)));
        let (mut loss_sum, mut level_sum) = (0.0, 0.0);
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample<T>> = idx.iter().map(|&i| &set.train[i]).collect();
            let r = batch_gradients(&params, &batch, cfg)?;
            adam_step(&mut params, &r.grads, &mut adam, &cfg.adam)
                .map_err(|e| Error::NonFinite(format!("epoch {epoch}: {e}")))?;
            if !params.all_finite() {
                return Err(Error::NonFinite(format!("parameters after epoch {epoch} step")));
            }
            loss_sum += r.loss;
            level_sum += r.level;
        }
        let n = set.train.len() as f64;
        let (val_loss, val_level) = mean_loss(&params, &set.val, &cfg.loss)?;
        let decision = state.early.update(epoch, val_loss);
        state.log.epochs.push(EpochLog {
            epoch,
            train_loss: loss_sum / n,
            train_level: level_sum / n,
            val_loss,
            val_level,
            seconds: started.elapsed().as_secs_f64(),
        });
        state.log.best_epoch = state.early.best_epoch;
        state.log.best_val_loss = state.early.best;
        state.log.stopped_early = decision == StopDecision::Stop;
        state.epochs_done += 1;
        log::info!(
            "epoch {epoch}: train {:.4} (dB MSE {:.4}) val {:.4}",
            loss_sum / n,
            level_sum / n,
            val_loss
        );
        if decision == StopDecision::Improved {
            best = params.clone();
        }
        if let Some(d) = dir {
            let meta = merge_extra(extra, &state)?;
            if decision == StopDecision::Improved {
                let mut ck = Checkpoint::new(best.clone(), cfg.seed);
                ck.extra = meta.clone();
                ck.stamp = Some(stamp.clone());
                ck.save(&d.join(BEST_CHECKPOINT))?;
            }
            let mut ck = Checkpoint::new(params.clone(), cfg.seed);
            ck.optimizer = Some(adam.clone());
            ck.extra = meta;
            ck.stamp = Some(stamp.clone());
            ck.save(&d.join(LAST_CHECKPOINT))?;
            write_log(d, &state.log)?;
        }
    }
    Ok((best, state.log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stopping_on_plateau() {
        let mut es = EarlyStopping::new(3);
        let losses = [5.0, 4.0, 4.0, 4.0, 4.0, 1.0];
        let decisions: Vec<_> = losses[..5]
            .iter()
            .enumerate()
            .map(|(e, &l)| es.update(e, l))
            .collect();
        assert_eq!(
            decisions[..5],
            [
                StopDecision::Improved,
                StopDecision::Improved,
                StopDecision::Continue,
                StopDecision::Continue,
                StopDecision::Stop
            ]
        );
        assert_eq!(es.best_epoch, Some(1));
        assert_eq!(es.update(5, losses[5]), StopDecision::Improved);
        assert_eq!(es.best_epoch, Some(5));
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        c.validate().unwrap();
        c.patience = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn empty_val_split_rejected() {
        let set = TrainSet::<f32> {
            train: vec![Sample { features: vec![0.0; 16], target: vec![0.5; 480] }],
            val: vec![],
        };
        let cfg = TrainConfig { loss: LossConfig { k: 5, ..LossConfig::default() }, ..TrainConfig::default() };
        let r = train(&set, &ModelConfig::micro(), &cfg, &serde_json::Value::Null, false);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }
}
