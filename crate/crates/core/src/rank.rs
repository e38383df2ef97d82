//! Gap filling and same-length candidate ranking with a trained model.
//!
//! Every blank position of the query is masked at once and scored from a
//! single forward pass, so candidate characters never feed back into the
//! context and all candidates for a gap see the same evidence. Scores are
//! sums of natural-log probabilities.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize_text, Cell, Sentence};
use crate::model::{argmax_char, Batch, Model, ModelError};
use crate::vocab::{Id, Vocabulary, NUM_SPECIALS, UNK};

#[derive(Debug, Error)]
pub enum RankError {
    #[error("the text has no blank lacuna to fill")]
    NoGapPresent,
    #[error("ranking needs exactly one blank lacuna, found {0}")]
    MultipleGaps(usize),
    #[error("no candidates given")]
    NoCandidates,
    #[error("candidate {0:?} is listed twice")]
    DuplicateCandidate(String),
    #[error("candidates must all have the same length, found lengths {0:?}")]
    MixedCandidateLengths(Vec<usize>),
    #[error("candidate {candidate:?} has {found} characters but the gap has {expected}")]
    LengthMismatch {
        candidate: String,
        expected: usize,
        found: usize,
    },
    #[error("candidate {candidate:?} contains {ch:?}, which is not in the vocabulary")]
    UnknownCharacter { candidate: String, ch: char },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Log distributions at the blank positions of one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct GapDistributions {
    /// Character index of each blank position.
    pub positions: Vec<usize>,
    /// One row per blank position, one column per vocabulary id.
    pub log_probs: Array2<f32>,
    cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharProb {
    pub char: char,
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionPrediction {
    pub index: usize,
    pub top_k: Vec<CharProb>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub text: String,
    pub log_prob: f64,
    pub rank: usize,
}

impl GapDistributions {
    /// Runs the model once with every blank position masked.
    pub fn compute(
        sentence: &Sentence,
        model: &Model<f32>,
        vocab: &Vocabulary,
    ) -> Result<Self, RankError> {
        let cells: Vec<Cell> = sentence.cells().collect();
        let positions: Vec<usize> = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c, Cell::Blank))
            .map(|(i, _)| i)
            .collect();
        if positions.is_empty() {
            return Err(RankError::NoGapPresent);
        }
        let batch = Batch::new(&[vocab.encode_cells(sentence)]);
        let log_probs = model.forward_rows(&batch, &positions)?;
        Ok(GapDistributions {
            positions,
            log_probs,
            cells,
        })
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f32> {
        self.log_probs.row(i)
    }

    /// Sum of the log probabilities of `ids` at the blank positions.
    pub fn score_ids(&self, ids: &[Id]) -> f64 {
        ids.iter()
            .enumerate()
            .map(|(i, &id)| f64::from(self.log_probs[[i, id as usize]]))
            .sum()
    }

    /// Most probable character at each blank position.
    pub fn greedy(&self) -> Vec<Id> {
        self.log_probs.rows().into_iter().map(argmax_char).collect()
    }

    /// The sentence text with blanks replaced by `fill`.
    pub fn filled_text(&self, fill: &[Id], vocab: &Vocabulary) -> String {
        let mut fill = fill.iter();
        self.cells
            .iter()
            .map(|cell| match *cell {
                Cell::Visible(c) | Cell::Damaged(c) | Cell::Reconstructed(c) => c,
                Cell::Blank => fill
                    .next()
                    .and_then(|&id| vocab.char_of(id))
                    .unwrap_or(char::REPLACEMENT_CHARACTER),
            })
            .collect()
    }

    /// The `k` most probable ordinary characters per position; ties go to the
    /// lower id.
    pub fn top_k(&self, k: usize, vocab: &Vocabulary) -> Vec<PositionPrediction> {
        self.positions
            .iter()
            .zip(self.log_probs.rows())
            .map(|(&index, row)| {
                let mut ids: Vec<usize> = (NUM_SPECIALS..row.len()).collect();
                ids.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
                let top_k = ids
                    .into_iter()
                    .take(k)
                    .filter_map(|id| {
                        vocab.char_of(id as Id).map(|char| CharProb {
                            char,
                            log_prob: f64::from(row[id]),
                        })
                    })
                    .collect();
                PositionPrediction { index, top_k }
            })
            .collect()
    }
}

/// Greedy fill of every blank lacuna plus the top `k` alternatives at each
/// blank position.
pub fn predict(
    sentence: &Sentence,
    model: &Model<f32>,
    vocab: &Vocabulary,
    k: usize,
) -> Result<(String, Vec<PositionPrediction>), RankError> {
    let dist = GapDistributions::compute(sentence, model, vocab)?;
    let fill = dist.greedy();
    Ok((dist.filled_text(&fill, vocab), dist.top_k(k, vocab)))
}

/// Candidates in model space: lowercased, diacritics removed.
fn normalize_candidates(candidates: &[String]) -> Result<Vec<String>, RankError> {
    if candidates.is_empty() {
        return Err(RankError::NoCandidates);
    }
    let normalized: Vec<String> = candidates.iter().map(|c| normalize_text(c)).collect();
    for (i, c) in normalized.iter().enumerate() {
        if normalized[..i].contains(c) {
            return Err(RankError::DuplicateCandidate(c.clone()));
        }
    }
    let mut lengths: Vec<usize> = normalized.iter().map(|c| c.chars().count()).collect();
    lengths.sort_unstable();
    lengths.dedup();
    if lengths.len() > 1 {
        return Err(RankError::MixedCandidateLengths(lengths));
    }
    Ok(normalized)
}

fn encode_candidate(
    candidate: &str,
    expected: usize,
    vocab: &Vocabulary,
) -> Result<Vec<Id>, RankError> {
    let found = candidate.chars().count();
    if found != expected {
        return Err(RankError::LengthMismatch {
            candidate: candidate.to_string(),
            expected,
            found,
        });
    }
    candidate
        .chars()
        .map(|ch| match vocab.encode_char(ch) {
            UNK => Err(RankError::UnknownCharacter {
                candidate: candidate.to_string(),
                ch,
            }),
            id => Ok(id),
        })
        .collect()
}

fn single_gap(
    sentence: &Sentence,
    model: &Model<f32>,
    vocab: &Vocabulary,
) -> Result<GapDistributions, RankError> {
    match sentence.blank_lacunae().count() {
        0 => Err(RankError::NoGapPresent),
        1 => GapDistributions::compute(sentence, model, vocab),
        n => Err(RankError::MultipleGaps(n)),
    }
}

/// Log probability of one candidate for the sentence's single blank lacuna.
pub fn score_candidate(
    sentence: &Sentence,
    candidate: &str,
    model: &Model<f32>,
    vocab: &Vocabulary,
) -> Result<f64, RankError> {
    let dist = single_gap(sentence, model, vocab)?;
    let ids = encode_candidate(&normalize_text(candidate), dist.positions.len(), vocab)?;
    Ok(dist.score_ids(&ids))
}

/// Scores every candidate from one shared forward pass and sorts by log
/// probability, highest first; equal scores are ordered by candidate text.
pub fn rank_candidates(
    sentence: &Sentence,
    candidates: &[String],
    model: &Model<f32>,
    vocab: &Vocabulary,
) -> Result<Vec<RankedCandidate>, RankError> {
    let normalized = normalize_candidates(candidates)?;
    let dist = single_gap(sentence, model, vocab)?;
    let mut scored = normalized
        .into_iter()
        .map(|text| {
            let ids = encode_candidate(&text, dist.positions.len(), vocab)?;
            let log_prob = dist.score_ids(&ids);
            Ok(RankedCandidate {
                text,
                log_prob,
                rank: 0,
            })
        })
        .collect::<Result<Vec<_>, RankError>>()?;
    scored.sort_by(|a, b| match b.log_prob.total_cmp(&a.log_prob) {
        Ordering::Equal => a.text.cmp(&b.text),
        o => o,
    });
    for (i, c) in scored.iter_mut().enumerate() {
        c.rank = i + 1;
    }
    Ok(scored)
}
