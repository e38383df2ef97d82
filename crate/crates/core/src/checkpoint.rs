//! Binary checkpoint files.
//!
//! ```text
//! magic      8 bytes   "LACMLM01"
//! meta_len   u64 LE
//! meta       meta_len bytes of UTF-8 `key=value` lines
//! tensors    repeated until end of file:
//!              name_len u32 LE, name (UTF-8),
//!              ndim u32 LE, dims u64 LE * ndim,
//!              data f32 LE * prod(dims), row-major
//! ```
//!
//! The metadata block carries the model configuration, the training record
//! and the vocabulary (its SHA-256 digest plus the symbols as hexadecimal code
//! points), so a checkpoint is self-contained for inference.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::model::{Activation, Model, ModelConfig, Params};
use crate::vocab::Vocabulary;

pub const MAGIC: &[u8; 8] = b"LACMLM01";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("bad checkpoint metadata: {0}")]
    Metadata(String),
    #[error("vocabulary digest mismatch: checkpoint has {expected}, given vocabulary has {found}")]
    VocabMismatch { expected: String, found: String },
    #[error("tensor mismatch: {0}")]
    Tensor(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    pub epoch: u32,
    pub dev_accuracy: f64,
    pub seed: u64,
    /// Masking regime tag such as `random-dynamic`.
    pub masking: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub vocab: Vocabulary,
    pub meta: TrainingMeta,
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Identity => "identity",
        Activation::Tanh => "tanh",
    }
}

impl Checkpoint {
    fn metadata(&self) -> String {
        let c = &self.model.config;
        let symbols: Vec<String> = self
            .vocab
            .chars()
            .iter()
            .map(|&ch| format!("{:04X}", ch as u32))
            .collect();
        let mut lines = vec![
            ("vocab_size", c.vocab_size.to_string()),
            ("embedding_dim", c.embedding_dim.to_string()),
            ("hidden_dim", c.hidden_dim.to_string()),
            ("projection_dim", c.projection_dim.to_string()),
            ("layers", c.layers.to_string()),
            ("bidirectional", c.bidirectional.to_string()),
            (
                "projection_activation",
                activation_name(c.projection_activation).to_string(),
            ),
            ("vocab_digest", self.vocab.digest()),
            ("vocab", symbols.join(" ")),
            ("epoch", self.meta.epoch.to_string()),
            ("dev_accuracy", self.meta.dev_accuracy.to_string()),
            ("seed", self.meta.seed.to_string()),
        ];
        if let Some(m) = &self.meta.masking {
            lines.push(("masking", m.clone()));
        }
        lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = self.metadata();
        let mut out = Vec::with_capacity(16 + meta.len() + 4 * self.model.params.num_parameters());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        for (name, t) in self.model.params.tensors() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in t.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let meta_len = r.u64()? as usize;
        let meta = std::str::from_utf8(r.take(meta_len)?)
            .map_err(|e| CheckpointError::Metadata(e.to_string()))?;
        let kv: BTreeMap<&str, &str> = meta.lines().filter_map(|l| l.split_once('=')).collect();
        let get = |k: &str| {
            kv.get(k)
                .copied()
                .ok_or_else(|| CheckpointError::Metadata(format!("missing {k}")))
        };
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T, CheckpointError> {
            v.parse()
                .map_err(|_| CheckpointError::Metadata(format!("bad {k}: {v:?}")))
        }
        let config = ModelConfig {
            vocab_size: num("vocab_size", get("vocab_size")?)?,
            embedding_dim: num("embedding_dim", get("embedding_dim")?)?,
            hidden_dim: num("hidden_dim", get("hidden_dim")?)?,
            projection_dim: num("projection_dim", get("projection_dim")?)?,
            layers: num("layers", get("layers")?)?,
            bidirectional: num("bidirectional", get("bidirectional")?)?,
            projection_activation: match get("projection_activation")? {
                "identity" => Activation::Identity,
                "tanh" => Activation::Tanh,
                other => {
                    return Err(CheckpointError::Metadata(format!(
                        "unknown activation {other:?}"
                    )))
                }
            },
        };
        config
            .validate()
            .map_err(|e| CheckpointError::Metadata(e.to_string()))?;
        let symbols = get("vocab")?
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|h| {
                u32::from_str_radix(h, 16)
                    .ok()
                    .and_then(char::from_u32)
                    .ok_or_else(|| CheckpointError::Metadata(format!("bad vocab symbol {h:?}")))
            })
            .collect::<Result<Vec<char>, _>>()?;
        let vocab = Vocabulary::from_symbols(symbols);
        let digest = get("vocab_digest")?;
        if vocab.digest() != digest {
            return Err(CheckpointError::VocabMismatch {
                expected: digest.to_string(),
                found: vocab.digest(),
            });
        }
        if vocab.len() != config.vocab_size {
            return Err(CheckpointError::Metadata(format!(
                "vocabulary has {} symbols but the model expects {}",
                vocab.len(),
                config.vocab_size
            )));
        }
        let meta = TrainingMeta {
            epoch: num("epoch", get("epoch")?)?,
            dev_accuracy: num("dev_accuracy", get("dev_accuracy")?)?,
            seed: num("seed", get("seed")?)?,
            masking: kv.get("masking").map(|s| s.to_string()),
        };

        let mut params = Params::<f32>::zeros(&config);
        for (expected, mut t) in params.tensors_mut() {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|e| CheckpointError::Tensor(e.to_string()))?;
            if name != expected {
                return Err(CheckpointError::Tensor(format!(
                    "expected {expected}, found {name}"
                )));
            }
            let ndim = r.u32()? as usize;
            let dims = (0..ndim)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            if dims != t.shape() {
                return Err(CheckpointError::Tensor(format!(
                    "{name}: shape {dims:?}, expected {:?}",
                    t.shape()
                )));
            }
            let data = r.take(4 * t.len())?;
            for (x, chunk) in t.iter_mut().zip(data.chunks_exact(4)) {
                *x = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
            }
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Tensor(
                "trailing bytes after last tensor".into(),
            ));
        }
        Ok(Checkpoint {
            model: Model { config, params },
            vocab,
            meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Loads and checks that the checkpoint was trained with `vocab`.
    pub fn load_with_vocab(path: &Path, vocab: &Vocabulary) -> Result<Self, CheckpointError> {
        let ckpt = Self::load(path)?;
        if ckpt.vocab.digest() != vocab.digest() {
            return Err(CheckpointError::VocabMismatch {
                expected: ckpt.vocab.digest(),
                found: vocab.digest(),
            });
        }
        Ok(ckpt)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let out = self
            .bytes
            .get(self.pos..end)
            .ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}
