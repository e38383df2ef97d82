use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Context;

use lacuna_core::checkpoint::{Checkpoint, TrainingMeta};
use lacuna_core::corpus::load_file;
use lacuna_core::masking::MaskPolicy;
use lacuna_core::model::{self, ModelConfig, TrainConfig, TrainError, DEV_MASK_SEED};
use lacuna_core::vocab::{Id, Vocabulary};

use crate::manifest::{sidecar, ManifestBuilder};
use crate::prepare::load_vocab;
use crate::{CmdResult, Failure, TrainArgs};

fn load_split(path: &Path, vocab: &Vocabulary) -> Result<Vec<Vec<Id>>, Failure> {
    let sentences = load_file(path).map_err(Failure::input)?;
    Ok(sentences.iter().map(|s| vocab.encode_cells(s)).collect())
}

pub fn run(args: &TrainArgs) -> CmdResult {
    let vocab = load_vocab(&args.data)?;
    let train_path = args.data.join("train.txt");
    let dev_path = args.data.join("dev.txt");
    let mut train_split = load_split(&train_path, &vocab)?;
    let dev_split = load_split(&dev_path, &vocab)?;
    if let Some(n) = args.limit_train {
        train_split.truncate(n);
    }

    let policy = MaskPolicy::new(args.mask.into(), args.remask.into(), args.seed);
    let model_cfg = ModelConfig {
        vocab_size: vocab.len(),
        embedding_dim: args.embedding_dim,
        hidden_dim: args.hidden_dim,
        projection_dim: args.projection_dim,
        layers: args.layers,
        bidirectional: true,
        projection_activation: args.projection_activation.into(),
    };
    let cfg = TrainConfig {
        learning_rate: args.learning_rate,
        weight_decay: args.weight_decay,
        batch_size: args.batch_size,
        max_epochs: args.max_epochs,
        early_stop_patience: args.patience,
        seed: args.seed,
        grad_clip_norm: args.grad_clip,
        max_length: args.max_length,
        max_batch_tokens: args.max_batch_tokens,
        dev_mask_seed: DEV_MASK_SEED,
    };

    let mut manifest = ManifestBuilder::new("train", args);
    manifest.seed("train", args.seed);
    manifest.seed("dev_mask", DEV_MASK_SEED);
    for p in [&args.data.join("vocab.txt"), &train_path, &dev_path] {
        manifest.input(p)?;
    }

    let log_path = sidecar(&args.out, "log.jsonl");
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut log_file =
        fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
    let mut write_error = None;
    log::info!(
        "training {} on {} sentences ({} dev), vocabulary {}",
        policy.tag(),
        train_split.len(),
        dev_split.len(),
        vocab.len()
    );
    let outcome = model::train(
        &train_split,
        &dev_split,
        &policy,
        &model_cfg,
        &cfg,
        &mut |r| {
            let line = serde_json::to_string(r).expect("epoch records serialize");
            if let Err(e) = writeln!(log_file, "{line}") {
                write_error.get_or_insert(e);
            }
        },
    );
    if let Some(e) = write_error {
        return Err(Failure::from(
            anyhow::Error::new(e).context("writing training log"),
        ));
    }
    let outcome = outcome.map_err(|e| match e {
        TrainError::DivergedLoss { .. } => Failure::training(e),
        _ => Failure::input(e),
    })?;

    let ckpt = Checkpoint {
        model: outcome.model,
        vocab,
        meta: TrainingMeta {
            epoch: outcome.best_epoch,
            dev_accuracy: outcome.best_dev_accuracy,
            seed: args.seed,
            masking: Some(policy.tag()),
        },
    };
    ckpt.save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    manifest.output(&args.out)?;
    manifest.output(&log_path)?;
    manifest.note("masking", policy.tag());
    manifest.note("best_epoch", outcome.best_epoch);
    manifest.note("best_dev_accuracy", outcome.best_dev_accuracy);
    manifest.note("stopped_early", outcome.stopped_early);
    manifest.write(&sidecar(&args.out, "manifest.json"))?;
    log::info!(
        "best dev accuracy {:.4} at epoch {}; wrote {}",
        outcome.best_dev_accuracy,
        outcome.best_epoch,
        args.out.display()
    );
    Ok(())
}
