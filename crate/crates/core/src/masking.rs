//! Mask generation for training and evaluation.
//!
//! Two distributions are supported. *Random* masking selects each position
//! with probability 0.15 and substitutes it with `<mask>` (80%), a random
//! character (10%) or leaves it unchanged (10%); every selected position is
//! scored. *Smart* masking places one to five contiguous `<mask>` runs whose
//! lengths follow the empirical lacuna length distribution.
//!
//! Every sentence gets its own generator derived from `(seed, epoch, index)`,
//! so masks do not depend on iteration order.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vocab::{Id, Vocabulary, MASK, NUM_SPECIALS};

pub const SELECT_PROB: f64 = 0.15;
pub const MASK_TOKEN_PROB: f64 = 0.80;
pub const RANDOM_TOKEN_PROB: f64 = 0.10;

pub const MAX_GAPS: usize = 5;
/// Probabilities of gap lengths 1, 2 and 3; the rest is uniform on 4..=34.
pub const SHORT_GAP_PROBS: [f64; 3] = [0.48, 0.22, 0.12];
pub const LONG_GAP_RANGE: (usize, usize) = (4, 34);
pub const PLACEMENT_ATTEMPTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaskError {
    #[error("cannot mask an empty sequence")]
    EmptySequence,
    #[error("masked set line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MaskedSample {
    pub input_ids: Vec<Id>,
    pub target_ids: Vec<Id>,
    /// Sorted, unique.
    pub mask_positions: Vec<usize>,
    pub epoch_tag: u32,
}

impl MaskedSample {
    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }

    /// Length of the contiguous masked run containing each mask position.
    pub fn run_lengths(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.mask_positions.len());
        let mut start = 0;
        for i in 0..self.mask_positions.len() {
            let last = i + 1 == self.mask_positions.len()
                || self.mask_positions[i + 1] != self.mask_positions[i] + 1;
            if last {
                let len = i + 1 - start;
                out.extend(std::iter::repeat_n(len, len));
                start = i + 1;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskDistribution {
    Random,
    Smart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Remask {
    Once,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MaskPolicy {
    pub distribution: MaskDistribution,
    pub remask: Remask,
    pub seed: u64,
}

impl MaskPolicy {
    pub fn new(distribution: MaskDistribution, remask: Remask, seed: u64) -> Self {
        MaskPolicy {
            distribution,
            remask,
            seed,
        }
    }

    /// `random-once`, `smart-dynamic`, ...
    pub fn tag(&self) -> String {
        format!("{}-{}", self.distribution, self.remask)
    }

    /// Seed of the generator family used for `epoch`.
    pub fn epoch_seed(&self, epoch: u32) -> u64 {
        match self.remask {
            Remask::Once => self.seed,
            Remask::Dynamic => self.seed ^ u64::from(epoch),
        }
    }
}

impl fmt::Display for MaskDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskDistribution::Random => "random",
            MaskDistribution::Smart => "smart",
        })
    }
}

impl fmt::Display for Remask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Remask::Once => "once",
            Remask::Dynamic => "dynamic",
        })
    }
}

impl FromStr for MaskDistribution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(MaskDistribution::Random),
            "smart" => Ok(MaskDistribution::Smart),
            _ => Err(format!("unknown masking distribution {s:?}")),
        }
    }
}

impl FromStr for Remask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "once" => Ok(Remask::Once),
            "dynamic" => Ok(Remask::Dynamic),
            _ => Err(format!("unknown re-masking mode {s:?}")),
        }
    }
}

/// Generator for sentence `index` within the generator family `seed`.
pub fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Substitution {
    Mask,
    Random,
    Unchanged,
}

pub fn draw_substitution<R: Rng + ?Sized>(rng: &mut R) -> Substitution {
    let u: f64 = rng.random();
    if u < MASK_TOKEN_PROB {
        Substitution::Mask
    } else if u < MASK_TOKEN_PROB + RANDOM_TOKEN_PROB {
        Substitution::Random
    } else {
        Substitution::Unchanged
    }
}

/// BERT-style masking. `vocab_size` includes the special symbols.
pub fn random_mask<R: Rng + ?Sized>(
    ids: &[Id],
    vocab_size: usize,
    rng: &mut R,
) -> Result<MaskedSample, MaskError> {
    if ids.is_empty() {
        return Err(MaskError::EmptySequence);
    }
    let mut positions: Vec<usize> = (0..ids.len())
        .filter(|_| rng.random_bool(SELECT_PROB))
        .collect();
    if positions.is_empty() {
        positions.push(rng.random_range(0..ids.len()));
    }
    let mut input = ids.to_vec();
    for &p in &positions {
        match draw_substitution(rng) {
            Substitution::Mask => input[p] = MASK,
            Substitution::Random if vocab_size > NUM_SPECIALS => {
                input[p] = rng.random_range(NUM_SPECIALS..vocab_size) as Id;
            }
            _ => {}
        }
    }
    Ok(MaskedSample {
        input_ids: input,
        target_ids: ids.to_vec(),
        mask_positions: positions,
        epoch_tag: 0,
    })
}

pub fn draw_gap_count<R: Rng + ?Sized>(rng: &mut R) -> usize {
    rng.random_range(1..=MAX_GAPS)
}

pub fn draw_gap_length<R: Rng + ?Sized>(rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in SHORT_GAP_PROBS.iter().enumerate() {
        acc += p;
        if u < acc {
            return i + 1;
        }
    }
    rng.random_range(LONG_GAP_RANGE.0..=LONG_GAP_RANGE.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gap {
    pub start: usize,
    pub len: usize,
}

impl Gap {
    fn overlaps(&self, other: &Gap) -> bool {
        self.start < other.start + other.len && other.start < self.start + self.len
    }
}

/// Places `count` gaps of the given lengths in a sequence of `n` positions.
/// Gaps are truncated at the sequence end; a gap that still collides after
/// [`PLACEMENT_ATTEMPTS`] start draws is dropped.
pub fn place_gaps<R: Rng + ?Sized>(n: usize, lengths: &[usize], rng: &mut R) -> Vec<Gap> {
    let mut gaps: Vec<Gap> = Vec::with_capacity(lengths.len());
    if n == 0 {
        return gaps;
    }
    for &len in lengths {
        for _ in 0..PLACEMENT_ATTEMPTS {
            let start = rng.random_range(0..n);
            let gap = Gap {
                start,
                len: len.min(n - start),
            };
            if !gaps.iter().any(|g| g.overlaps(&gap)) {
                gaps.push(gap);
                break;
            }
        }
    }
    gaps
}

pub fn smart_gaps<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Gap> {
    let count = draw_gap_count(rng);
    let lengths: Vec<usize> = (0..count).map(|_| draw_gap_length(rng)).collect();
    place_gaps(n, &lengths, rng)
}

/// Lacuna-shaped masking: every gapped position becomes `<mask>`.
pub fn smart_mask<R: Rng + ?Sized>(ids: &[Id], rng: &mut R) -> Result<MaskedSample, MaskError> {
    if ids.is_empty() {
        return Err(MaskError::EmptySequence);
    }
    Ok(mask_gaps(ids, &smart_gaps(ids.len(), rng)))
}

pub fn mask_gaps(ids: &[Id], gaps: &[Gap]) -> MaskedSample {
    let mut positions: Vec<usize> = gaps.iter().flat_map(|g| g.start..g.start + g.len).collect();
    positions.sort_unstable();
    let mut input = ids.to_vec();
    for &p in &positions {
        input[p] = MASK;
    }
    MaskedSample {
        input_ids: input,
        target_ids: ids.to_vec(),
        mask_positions: positions,
        epoch_tag: 0,
    }
}

pub fn mask_one<R: Rng + ?Sized>(
    ids: &[Id],
    distribution: MaskDistribution,
    vocab_size: usize,
    rng: &mut R,
) -> Result<MaskedSample, MaskError> {
    match distribution {
        MaskDistribution::Random => random_mask(ids, vocab_size, rng),
        MaskDistribution::Smart => smart_mask(ids, rng),
    }
}

/// Masks a whole split for `epoch`. Under [`Remask::Once`] the output is the
/// same for every epoch.
pub fn apply_policy(
    split: &[Vec<Id>],
    policy: &MaskPolicy,
    vocab_size: usize,
    epoch: u32,
) -> Result<Vec<MaskedSample>, MaskError> {
    let seed = policy.epoch_seed(epoch);
    let tag = match policy.remask {
        Remask::Once => 0,
        Remask::Dynamic => epoch,
    };
    split
        .iter()
        .enumerate()
        .map(|(i, ids)| {
            let mut rng = sample_rng(seed, i);
            let mut sample = mask_one(ids, policy.distribution, vocab_size, &mut rng)?;
            sample.epoch_tag = tag;
            Ok(sample)
        })
        .collect()
}

/// A masked sentence in its persisted form: the normalized text plus one mark
/// per masked position.
///
/// Line format: `<id>\t<text>\t<marks>` where marks are comma separated and each
/// is `i` (replaced by `<mask>`), `i~` (left unchanged) or `i=XXXX` (replaced by
/// the character with hexadecimal code point `XXXX`). Positions count
/// characters of `<text>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedLine {
    pub id: String,
    pub text: String,
    pub marks: Vec<(usize, Mark)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Mask,
    Unchanged,
    Replaced(char),
}

impl MaskedLine {
    /// `text` must be the string whose encoding produced `sample.target_ids`.
    pub fn from_sample(id: &str, text: &str, sample: &MaskedSample, vocab: &Vocabulary) -> Self {
        let marks = sample
            .mask_positions
            .iter()
            .map(|&p| {
                let input = sample.input_ids[p];
                let mark = if input == MASK {
                    Mark::Mask
                } else if input == sample.target_ids[p] {
                    Mark::Unchanged
                } else {
                    vocab.char_of(input).map_or(Mark::Mask, Mark::Replaced)
                };
                (p, mark)
            })
            .collect();
        MaskedLine {
            id: id.to_string(),
            text: text.to_string(),
            marks,
        }
    }

    pub fn to_sample(&self, vocab: &Vocabulary) -> MaskedSample {
        let target = vocab.encode(&self.text);
        let mut input = target.clone();
        for &(p, mark) in &self.marks {
            match mark {
                Mark::Mask => input[p] = MASK,
                Mark::Unchanged => {}
                Mark::Replaced(c) => input[p] = vocab.encode_char(c),
            }
        }
        MaskedSample {
            input_ids: input,
            target_ids: target,
            mask_positions: self.marks.iter().map(|m| m.0).collect(),
            epoch_tag: 0,
        }
    }

    pub fn to_line(&self) -> String {
        let marks: Vec<String> = self
            .marks
            .iter()
            .map(|&(p, m)| match m {
                Mark::Mask => p.to_string(),
                Mark::Unchanged => format!("{p}~"),
                Mark::Replaced(c) => format!("{p}={:04X}", c as u32),
            })
            .collect();
        format!("{}\t{}\t{}", self.id, self.text, marks.join(","))
    }

    pub fn parse(line: &str, line_no: usize) -> Result<Self, MaskError> {
        let bad = |reason: String| MaskError::Malformed {
            line: line_no,
            reason,
        };
        let mut cols = line.split('\t');
        let (Some(id), Some(text), Some(marks), None) =
            (cols.next(), cols.next(), cols.next(), cols.next())
        else {
            return Err(bad("expected three tab-separated columns".into()));
        };
        let n = text.chars().count();
        let mut parsed = Vec::new();
        for entry in marks.split(',').filter(|e| !e.is_empty()) {
            let (pos, mark) = if let Some(p) = entry.strip_suffix('~') {
                (p, Mark::Unchanged)
            } else if let Some((p, hex)) = entry.split_once('=') {
                let c = u32::from_str_radix(hex, 16)
                    .ok()
                    .and_then(char::from_u32)
                    .ok_or_else(|| bad(format!("bad code point {hex:?}")))?;
                (p, Mark::Replaced(c))
            } else {
                (entry, Mark::Mask)
            };
            let pos: usize = pos
                .parse()
                .map_err(|_| bad(format!("bad position {pos:?}")))?;
            if pos >= n {
                return Err(bad(format!("position {pos} beyond text of length {n}")));
            }
            if parsed.last().is_some_and(|&(last, _)| last >= pos) {
                return Err(bad("positions must be strictly increasing".into()));
            }
            parsed.push((pos, mark));
        }
        if parsed.is_empty() {
            return Err(bad("no masked positions".into()));
        }
        Ok(MaskedLine {
            id: id.to_string(),
            text: text.to_string(),
            marks: parsed,
        })
    }
}

pub fn write_masked_set(lines: &[MaskedLine]) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(&l.to_line());
        out.push('\n');
    }
    out
}

pub fn read_masked_set(text: &str) -> Result<Vec<MaskedLine>, MaskError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| MaskedLine::parse(l, i + 1))
        .collect()
}
