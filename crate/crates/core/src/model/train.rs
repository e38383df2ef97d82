use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{argmax_char, clip_grad_norm, AdamW, MaskedBatch, Model, ModelConfig, ModelError};
use crate::masking::{apply_policy, sample_rng, MaskError, MaskPolicy, MaskedSample, Remask};
use crate::vocab::Id;

/// Seed of the single, fixed masking of the dev split.
pub const DEV_MASK_SEED: u64 = 0x00de_5eed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: u32,
    /// Epochs without dev accuracy improvement before stopping.
    pub early_stop_patience: u32,
    pub seed: u64,
    pub grad_clip_norm: f64,
    /// Sequences longer than this are truncated.
    pub max_length: Option<usize>,
    /// Upper bound on padded positions per batch; a single long sentence may exceed it.
    pub max_batch_tokens: usize,
    pub dev_mask_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-4,
            weight_decay: 0.01,
            batch_size: 32,
            max_epochs: 50,
            early_stop_patience: 5,
            seed: 0,
            grad_clip_norm: 5.0,
            max_length: None,
            max_batch_tokens: 4096,
            dev_mask_seed: DEV_MASK_SEED,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(TrainError::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if self.early_stop_patience < 1 {
            return Err(TrainError::InvalidConfig(
                "early_stop_patience must be at least 1".into(),
            ));
        }
        if self.batch_size < 1 {
            return Err(TrainError::InvalidConfig(
                "batch_size must be at least 1".into(),
            ));
        }
        if self.max_length == Some(0) {
            return Err(TrainError::InvalidConfig(
                "max_length must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training loss became non-finite in epoch {epoch}, batch {batch}")]
    DivergedLoss { epoch: u32, batch: usize },
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// Epoch 0 describes the freshly initialized model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub train_loss: Option<f64>,
    pub dev_loss: f64,
    pub dev_accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best dev accuracy.
    pub model: Model<f32>,
    pub log: Vec<EpochRecord>,
    pub best_epoch: u32,
    pub best_dev_accuracy: f64,
    pub stopped_early: bool,
}

/// Groups samples of similar length; batch order is shuffled with `rng`.
fn make_batches<R: Rng>(
    samples: &[MaskedSample],
    batch_size: usize,
    max_tokens: usize,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let keys: Vec<u32> = (0..samples.len()).map(|_| rng.random()).collect();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by_key(|&i| (samples[i].len(), keys[i]));
    let mut batches = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    for i in order {
        let width = samples[i].len();
        if !current.is_empty()
            && (current.len() >= batch_size || (current.len() + 1) * width > max_tokens)
        {
            batches.push(std::mem::take(&mut current));
        }
        current.push(i);
    }
    if !current.is_empty() {
        batches.push(current);
    }
    batches.shuffle(rng);
    batches
}

/// Groups sample indices into evaluation batches: sorted by length, at most
/// `batch_size` samples and `max_tokens` padded positions per batch.
pub fn length_chunks(lengths: &[usize], batch_size: usize, max_tokens: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by_key(|&i| lengths[i]);
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len()
            && end - start < batch_size
            && (end - start + 1) * lengths[order[end]] <= max_tokens
        {
            end += 1;
        }
        chunks.push(order[start..end].to_vec());
        start = end;
    }
    chunks
}

/// Mean masked loss and masked accuracy of `model` on fixed samples.
pub fn masked_loss_accuracy(
    model: &Model<f32>,
    samples: &[MaskedSample],
    batch_size: usize,
    max_tokens: usize,
) -> Result<(f64, f64), ModelError> {
    let lengths: Vec<usize> = samples.iter().map(MaskedSample::len).collect();
    let (mut nll, mut correct, mut total) = (0.0f64, 0usize, 0usize);
    for chunk in length_chunks(&lengths, batch_size, max_tokens) {
        let chunk: Vec<&MaskedSample> = chunk.iter().map(|&i| &samples[i]).collect();
        let mb = MaskedBatch::new(&chunk)?;
        let rows: Vec<usize> = mb.targets.iter().map(|t| t.0).collect();
        let lp = model.forward_rows(&mb.batch, &rows)?;
        for (i, &(_, target)) in mb.targets.iter().enumerate() {
            nll -= f64::from(lp[[i, target as usize]]);
            if argmax_char(lp.row(i)) == target {
                correct += 1;
            }
        }
        total += mb.targets.len();
    }
    if total == 0 {
        return Ok((0.0, 0.0));
    }
    Ok((nll / total as f64, correct as f64 / total as f64))
}

fn truncate(split: &[Vec<Id>], max_length: Option<usize>) -> Vec<Vec<Id>> {
    split
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| match max_length {
            Some(n) if s.len() > n => s[..n].to_vec(),
            _ => s.clone(),
        })
        .collect()
}

/// Trains a masked language model, keeping the parameters with the best dev
/// accuracy. The dev split is masked once, with `cfg.dev_mask_seed`, using the
/// policy's distribution. `on_epoch` sees every log record as it is produced.
pub fn train(
    train_split: &[Vec<Id>],
    dev_split: &[Vec<Id>],
    policy: &MaskPolicy,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let train_split = truncate(train_split, cfg.max_length);
    let dev_split = truncate(dev_split, cfg.max_length);
    if train_split.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if dev_split.is_empty() {
        return Err(TrainError::EmptySplit("dev"));
    }
    let vocab_size = model_cfg.vocab_size;
    let dev_policy = MaskPolicy::new(policy.distribution, Remask::Once, cfg.dev_mask_seed);
    let dev = apply_policy(&dev_split, &dev_policy, vocab_size, 0)?;

    let mut model = Model::<f32>::init(model_cfg.clone(), cfg.seed)?;
    let mut opt = AdamW::new(&model.params, cfg.learning_rate, cfg.weight_decay);
    let mut log = Vec::new();

    let started = Instant::now();
    let (dev_loss, dev_accuracy) =
        masked_loss_accuracy(&model, &dev, cfg.batch_size, cfg.max_batch_tokens)?;
    let initial = EpochRecord {
        epoch: 0,
        train_loss: None,
        dev_loss,
        dev_accuracy,
        seconds: started.elapsed().as_secs_f64(),
    };
    on_epoch(&initial);
    log.push(initial);
    let mut best = (0u32, dev_accuracy, model.clone());
    let mut stale = 0;
    let mut stopped_early = false;

    let mut once_cache: Option<Vec<MaskedSample>> = None;
    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let samples = match (policy.remask, &once_cache) {
            (Remask::Once, Some(cached)) => cached.clone(),
            _ => {
                let s = apply_policy(&train_split, policy, vocab_size, epoch - 1)?;
                if policy.remask == Remask::Once {
                    once_cache = Some(s.clone());
                }
                s
            }
        };
        let mut rng = sample_rng(cfg.seed.wrapping_add(0x5eed), epoch as usize);
        let batches = make_batches(&samples, cfg.batch_size, cfg.max_batch_tokens, &mut rng);
        let (mut loss_sum, mut weight) = (0.0f64, 0usize);
        for (bi, idx) in batches.iter().enumerate() {
            let chunk: Vec<&MaskedSample> = idx.iter().map(|&i| &samples[i]).collect();
            let mb = MaskedBatch::new(&chunk)?;
            let (loss, mut grad) = model.loss_and_grad(&mb)?;
            let norm = clip_grad_norm(&mut grad, cfg.grad_clip_norm);
            if !loss.is_finite() || !norm.is_finite() {
                return Err(TrainError::DivergedLoss { epoch, batch: bi });
            }
            opt.step(&mut model.params, &grad);
            loss_sum += f64::from(loss) * mb.targets.len() as f64;
            weight += mb.targets.len();
        }
        let (dev_loss, dev_accuracy) =
            masked_loss_accuracy(&model, &dev, cfg.batch_size, cfg.max_batch_tokens)?;
        if !dev_loss.is_finite() {
            return Err(TrainError::DivergedLoss {
                epoch,
                batch: batches.len(),
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss: Some(loss_sum / weight.max(1) as f64),
            dev_loss,
            dev_accuracy,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train loss {:.4}, dev loss {dev_loss:.4}, dev accuracy {dev_accuracy:.4}",
            record.train_loss.unwrap_or(f64::NAN)
        );
        on_epoch(&record);
        log.push(record);
        if dev_accuracy > best.1 {
            best = (epoch, dev_accuracy, model.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.early_stop_patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best.2,
        log,
        best_epoch: best.0,
        best_dev_accuracy: best.1,
        stopped_early,
    })
}
