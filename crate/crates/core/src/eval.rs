//! Accuracy over masked test sets, broken down by gap length.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Cell, Sentence, SentenceClass};
use crate::masking::MaskedSample;
use crate::model::{argmax_char, length_chunks, MaskedBatch, Model, ModelError};
use crate::vocab::{Id, Vocabulary, MASK};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("sample {0} has no masked positions")]
    NoMaskedPositions(usize),
    #[error("sentence {id} contains a blank lacuna")]
    ContainsBlankLacuna { id: String },
    #[error("sentence {id} has no reconstructed characters")]
    NoReconstruction { id: String },
    #[error("predictor returned {got} predictions for sample {index}, expected {expected}")]
    PredictionCount {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Anything that fills masked positions: one predicted id per mask position,
/// in position order, for every sample.
pub trait Predictor {
    fn predict_all(&self, samples: &[MaskedSample]) -> Result<Vec<Vec<Id>>, EvalError>;
}

/// Greedy per-position argmax of a trained model, batched by length.
pub struct ModelPredictor<'a> {
    pub model: &'a Model<f32>,
    pub batch_size: usize,
    pub max_tokens: usize,
}

impl<'a> ModelPredictor<'a> {
    pub fn new(model: &'a Model<f32>) -> Self {
        ModelPredictor {
            model,
            batch_size: 32,
            max_tokens: 4096,
        }
    }
}

impl Predictor for ModelPredictor<'_> {
    fn predict_all(&self, samples: &[MaskedSample]) -> Result<Vec<Vec<Id>>, EvalError> {
        let lengths: Vec<usize> = samples.iter().map(MaskedSample::len).collect();
        let mut out = vec![Vec::new(); samples.len()];
        for chunk in length_chunks(&lengths, self.batch_size, self.max_tokens) {
            let refs: Vec<&MaskedSample> = chunk.iter().map(|&i| &samples[i]).collect();
            if let Some(b) = refs.iter().position(|s| s.mask_positions.is_empty()) {
                return Err(EvalError::NoMaskedPositions(chunk[b]));
            }
            let mb = MaskedBatch::new(&refs)?;
            let rows: Vec<usize> = mb.targets.iter().map(|t| t.0).collect();
            let lp = self.model.forward_rows(&mb.batch, &rows)?;
            let mut next = 0;
            for &i in &chunk {
                let n = samples[i].mask_positions.len();
                out[i] = (next..next + n).map(|r| argmax_char(lp.row(r))).collect();
                next += n;
            }
        }
        Ok(out)
    }
}

pub const BUCKETS: [&str; 6] = ["1", "2", "3", "4", "5", "6+"];

pub fn bucket_of(run_length: usize) -> &'static str {
    BUCKETS[run_length.clamp(1, 6) - 1]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BucketStats {
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub test_set_name: String,
    pub model_id: String,
    pub seed: Option<u64>,
    pub total_masked: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Keyed by the length of the contiguous masked run, `"1"` to `"5"` and `"6+"`.
    pub per_length_buckets: BTreeMap<String, BucketStats>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Scores character-exact predictions at every masked position.
pub fn evaluate(
    predictor: &dyn Predictor,
    samples: &[MaskedSample],
    test_set_name: &str,
    model_id: &str,
    seed: Option<u64>,
) -> Result<EvalReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    if let Some(i) = samples.iter().position(|s| s.mask_positions.is_empty()) {
        return Err(EvalError::NoMaskedPositions(i));
    }
    let predictions = predictor.predict_all(samples)?;
    let mut buckets: BTreeMap<String, BucketStats> = BUCKETS
        .iter()
        .map(|b| (b.to_string(), BucketStats::default()))
        .collect();
    let (mut total, mut correct) = (0, 0);
    for (index, (s, pred)) in samples.iter().zip(&predictions).enumerate() {
        if pred.len() != s.mask_positions.len() {
            return Err(EvalError::PredictionCount {
                index,
                got: pred.len(),
                expected: s.mask_positions.len(),
            });
        }
        for ((&p, &run), &guess) in s.mask_positions.iter().zip(&s.run_lengths()).zip(pred) {
            let hit = usize::from(guess == s.target_ids[p]);
            let b = buckets
                .get_mut(bucket_of(run))
                .expect("all buckets present");
            b.count += 1;
            b.correct += hit;
            total += 1;
            correct += hit;
        }
    }
    for b in buckets.values_mut() {
        b.accuracy = ratio(b.correct, b.count);
    }
    Ok(EvalReport {
        test_set_name: test_set_name.to_string(),
        model_id: model_id.to_string(),
        seed,
        total_masked: total,
        correct,
        accuracy: ratio(correct, total),
        per_length_buckets: buckets,
    })
}

/// Masks every scholar-reconstructed character; damaged-but-visible letters
/// stay as context.
pub fn build_gold_test(
    sentences: &[Sentence],
    vocab: &Vocabulary,
) -> Result<Vec<MaskedSample>, EvalError> {
    sentences
        .iter()
        .map(|s| {
            match s.classify() {
                SentenceClass::HasBlank => {
                    return Err(EvalError::ContainsBlankLacuna { id: s.id.clone() })
                }
                SentenceClass::Complete => {
                    return Err(EvalError::NoReconstruction { id: s.id.clone() })
                }
                SentenceClass::ReconstructedOnly => {}
            }
            let mut sample = MaskedSample {
                input_ids: Vec::new(),
                target_ids: Vec::new(),
                mask_positions: Vec::new(),
                epoch_tag: 0,
            };
            for (i, cell) in s.cells().enumerate() {
                let (input, target) = match cell {
                    Cell::Visible(c) | Cell::Damaged(c) => {
                        let id = vocab.encode_char(c);
                        (id, id)
                    }
                    Cell::Reconstructed(c) => {
                        sample.mask_positions.push(i);
                        (MASK, vocab.encode_char(c))
                    }
                    Cell::Blank => unreachable!("classified without blank lacunae"),
                };
                sample.input_ids.push(input);
                sample.target_ids.push(target);
            }
            Ok(sample)
        })
        .collect()
}

/// Accuracy grid with one row per model and one column per test set, in
/// order of first appearance.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut models: Vec<&str> = Vec::new();
    let mut sets: Vec<&str> = Vec::new();
    for r in reports {
        if !models.contains(&r.model_id.as_str()) {
            models.push(&r.model_id);
        }
        if !sets.contains(&r.test_set_name.as_str()) {
            sets.push(&r.test_set_name);
        }
    }
    let name_w = models
        .iter()
        .map(|m| m.chars().count())
        .max()
        .unwrap_or(0)
        .max(5);
    let col_w: Vec<usize> = sets.iter().map(|s| s.chars().count().max(8)).collect();
    let mut out = String::new();
    let _ = write!(out, "{:<name_w$}", "Model");
    for (s, w) in sets.iter().zip(&col_w) {
        let _ = write!(out, "  {s:>w$}");
    }
    out.push('\n');
    for m in &models {
        let _ = write!(out, "{m:<name_w$}");
        for (s, w) in sets.iter().zip(&col_w) {
            match reports
                .iter()
                .find(|r| r.model_id == *m && r.test_set_name == *s)
            {
                Some(r) => {
                    let _ = write!(out, "  {:>w$.3}", r.accuracy);
                }
                None => {
                    let _ = write!(out, "  {:>w$}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}
