//! Heuristic baselines: uniform random character, modal character, and a
//! left-context character trigram model.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::eval::{EvalError, Predictor};
use crate::masking::{sample_rng, MaskedSample};
use crate::vocab::{Id, Vocabulary, NUM_SPECIALS};

/// Default add-k smoothing constant for the trigram model.
pub const DEFAULT_K: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BaselineError {
    #[error("training split contains no characters")]
    EmptyCorpus,
    #[error("vocabulary has no ordinary symbols")]
    EmptyVocabulary,
}

fn is_char(id: Id) -> bool {
    id as usize >= NUM_SPECIALS
}

/// Predicts a uniformly random ordinary symbol at every masked position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomBaseline {
    pub vocab_size: usize,
    pub seed: u64,
}

impl RandomBaseline {
    pub fn new(vocab_size: usize, seed: u64) -> Result<Self, BaselineError> {
        if vocab_size <= NUM_SPECIALS {
            return Err(BaselineError::EmptyVocabulary);
        }
        Ok(RandomBaseline { vocab_size, seed })
    }

    /// Predictions for the sample at `index`; independent of every other sample.
    pub fn predict(&self, index: usize, sample: &MaskedSample) -> Vec<Id> {
        let mut rng = sample_rng(self.seed, index);
        let range = NUM_SPECIALS as Id..self.vocab_size as Id;
        sample
            .mask_positions
            .iter()
            .map(|_| rng.random_range(range.clone()))
            .collect()
    }
}

impl Predictor for RandomBaseline {
    fn predict_all(&self, samples: &[MaskedSample]) -> Result<Vec<Vec<Id>>, EvalError> {
        Ok(samples
            .iter()
            .enumerate()
            .map(|(i, s)| self.predict(i, s))
            .collect())
    }
}

/// Always predicts the most frequent training character.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeBaseline {
    pub modal: Id,
}

impl ModeBaseline {
    /// Ties go to the lowest id.
    pub fn fit(train: &[Vec<Id>]) -> Result<Self, BaselineError> {
        let mut counts: BTreeMap<Id, u64> = BTreeMap::new();
        for &id in train.iter().flatten().filter(|&&id| is_char(id)) {
            *counts.entry(id).or_default() += 1;
        }
        let mut best: Option<(Id, u64)> = None;
        for (id, n) in counts {
            if best.is_none_or(|(_, m)| n > m) {
                best = Some((id, n));
            }
        }
        best.map(|(modal, _)| ModeBaseline { modal })
            .ok_or(BaselineError::EmptyCorpus)
    }
}

impl Predictor for ModeBaseline {
    fn predict_all(&self, samples: &[MaskedSample]) -> Result<Vec<Vec<Id>>, EvalError> {
        Ok(samples
            .iter()
            .map(|s| vec![self.modal; s.mask_positions.len()])
            .collect())
    }
}

/// Accuracy of a constant prediction `c`: the share of masked targets equal to `c`.
pub fn constant_accuracy(samples: &[MaskedSample], c: Id) -> f64 {
    let (hits, total) = samples
        .iter()
        .flat_map(|s| s.mask_positions.iter().map(move |&p| s.target_ids[p]))
        .fold((0usize, 0usize), |(h, t), id| {
            (h + usize::from(id == c), t + 1)
        });
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Character n-gram counts (n = 1, 2, 3) over the training split.
///
/// N-grams containing a special symbol are not counted. Context totals are
/// the number of counted continuations, so every trigram count is at most
/// the count of its two-character prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigramTable {
    pub k: f64,
    /// Number of ordinary symbols in the vocabulary.
    pub num_chars: usize,
    unigrams: BTreeMap<Id, u64>,
    bigrams: BTreeMap<Id, BTreeMap<Id, u64>>,
    trigrams: BTreeMap<(Id, Id), BTreeMap<Id, u64>>,
}

fn total(m: &BTreeMap<Id, u64>) -> u64 {
    m.values().sum()
}

/// Highest count, lowest id on ties.
fn best(m: &BTreeMap<Id, u64>) -> Option<Id> {
    let mut out: Option<(Id, u64)> = None;
    for (&id, &n) in m {
        if out.is_none_or(|(_, b)| n > b) {
            out = Some((id, n));
        }
    }
    out.map(|(id, _)| id)
}

impl TrigramTable {
    pub fn build(train: &[Vec<Id>], vocab_size: usize, k: f64) -> Result<Self, BaselineError> {
        if vocab_size <= NUM_SPECIALS {
            return Err(BaselineError::EmptyVocabulary);
        }
        let mut t = TrigramTable {
            k,
            num_chars: vocab_size - NUM_SPECIALS,
            unigrams: BTreeMap::new(),
            bigrams: BTreeMap::new(),
            trigrams: BTreeMap::new(),
        };
        for seq in train {
            for (i, &c) in seq.iter().enumerate() {
                if !is_char(c) {
                    continue;
                }
                *t.unigrams.entry(c).or_default() += 1;
                let b = match i.checked_sub(1).map(|j| seq[j]) {
                    Some(b) if is_char(b) => b,
                    _ => continue,
                };
                *t.bigrams.entry(b).or_default().entry(c).or_default() += 1;
                let a = match i.checked_sub(2).map(|j| seq[j]) {
                    Some(a) if is_char(a) => a,
                    _ => continue,
                };
                *t.trigrams.entry((a, b)).or_default().entry(c).or_default() += 1;
            }
        }
        if t.unigrams.is_empty() {
            return Err(BaselineError::EmptyCorpus);
        }
        Ok(t)
    }

    /// The continuation counts used for context `(a, b)`: trigram if that
    /// context was seen, else bigram on `b`, else unigram.
    fn backoff(&self, a: Option<Id>, b: Option<Id>) -> &BTreeMap<Id, u64> {
        if let (Some(a), Some(b)) = (a, b) {
            if let Some(m) = self.trigrams.get(&(a, b)) {
                return m;
            }
        }
        if let Some(m) = b.and_then(|b| self.bigrams.get(&b)) {
            return m;
        }
        &self.unigrams
    }

    /// Add-k smoothed `p(c | a b)` with backoff. Specials in the context are
    /// treated as missing context.
    pub fn prob(&self, a: Option<Id>, b: Option<Id>, c: Id) -> f64 {
        if !is_char(c) {
            return 0.0;
        }
        let (a, b) = (a.filter(|&x| is_char(x)), b.filter(|&x| is_char(x)));
        let a = if b.is_some() { a } else { None };
        let m = self.backoff(a, b);
        let n = m.get(&c).copied().unwrap_or(0) as f64;
        (n + self.k) / (total(m) as f64 + self.k * self.num_chars as f64)
    }

    /// Most probable next character; ties go to the lowest id.
    pub fn argmax(&self, a: Option<Id>, b: Option<Id>) -> Id {
        let (a, b) = (a.filter(|&x| is_char(x)), b.filter(|&x| is_char(x)));
        let a = if b.is_some() { a } else { None };
        best(self.backoff(a, b)).expect("counted tables are never empty")
    }

    /// Left-to-right fill: earlier masked positions contribute their
    /// predicted characters as context for later ones.
    pub fn predict(&self, sample: &MaskedSample) -> Vec<Id> {
        let mut seq = sample.input_ids.clone();
        let mut out = Vec::with_capacity(sample.mask_positions.len());
        for &p in &sample.mask_positions {
            let b = p.checked_sub(1).map(|j| seq[j]);
            let a = p.checked_sub(2).map(|j| seq[j]);
            let c = self.argmax(a, b);
            seq[p] = c;
            out.push(c);
        }
        out
    }

    /// Sorted `context<TAB>char<TAB>count` lines for inspection; the context
    /// is empty for unigrams.
    pub fn to_text(&self, vocab: &Vocabulary) -> String {
        let sym = |id: Id| vocab.symbol(id);
        let mut lines: Vec<String> = Vec::new();
        for (&c, &n) in &self.unigrams {
            lines.push(format!("\t{}\t{n}", sym(c)));
        }
        for (&b, m) in &self.bigrams {
            for (&c, &n) in m {
                lines.push(format!("{}\t{}\t{n}", sym(b), sym(c)));
            }
        }
        for (&(a, b), m) in &self.trigrams {
            for (&c, &n) in m {
                lines.push(format!("{}{}\t{}\t{n}", sym(a), sym(b), sym(c)));
            }
        }
        lines.sort();
        let mut out = String::new();
        for l in lines {
            let _ = writeln!(out, "{l}");
        }
        out
    }
}

impl Predictor for TrigramTable {
    fn predict_all(&self, samples: &[MaskedSample]) -> Result<Vec<Vec<Id>>, EvalError> {
        Ok(samples.iter().map(|s| self.predict(s)).collect())
    }
}
