//! Indexed character inventory.
//!
//! Indices `0..3` are reserved for `<pad>`, `<unk>` and `<mask>`; the remaining
//! symbols are single lowercased characters ordered by descending training
//! frequency, ties broken by code point.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::corpus::{Cell, Sentence};
use crate::digest::sha256_hex;

pub type Id = u32;

pub const PAD: Id = 0;
pub const UNK: Id = 1;
pub const MASK: Id = 2;
pub const NUM_SPECIALS: usize = 3;

pub const SPECIAL_TAGS: [&str; NUM_SPECIALS] = ["<pad>", "<unk>", "<mask>"];

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("cannot build a vocabulary from an empty training split")]
    EmptyCorpus,
    #[error("vocabulary file line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<char>,
    index: HashMap<char, Id>,
}

impl Vocabulary {
    /// Builds from already ordered non-special symbols.
    pub fn from_symbols(symbols: impl IntoIterator<Item = char>) -> Self {
        let symbols: Vec<char> = symbols.into_iter().collect();
        let index = symbols
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, (i + NUM_SPECIALS) as Id))
            .collect();
        Vocabulary { symbols, index }
    }

    /// Total size including the special symbols.
    pub fn len(&self) -> usize {
        self.symbols.len() + NUM_SPECIALS
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of ordinary (non-special) symbols.
    pub fn num_chars(&self) -> usize {
        self.symbols.len()
    }

    pub fn chars(&self) -> &[char] {
        &self.symbols
    }

    pub fn id(&self, c: char) -> Option<Id> {
        self.index.get(&c).copied()
    }

    pub fn encode_char(&self, c: char) -> Id {
        self.id(c).unwrap_or(UNK)
    }

    pub fn encode(&self, text: &str) -> Vec<Id> {
        text.chars().map(|c| self.encode_char(c)).collect()
    }

    /// `None` for special ids and out-of-range ids.
    pub fn char_of(&self, id: Id) -> Option<char> {
        (id as usize)
            .checked_sub(NUM_SPECIALS)
            .and_then(|i| self.symbols.get(i).copied())
    }

    pub fn symbol(&self, id: Id) -> String {
        match id as usize {
            i if i < NUM_SPECIALS => SPECIAL_TAGS[i].to_string(),
            _ => self
                .char_of(id)
                .map(String::from)
                .unwrap_or_else(|| SPECIAL_TAGS[UNK as usize].to_string()),
        }
    }

    /// Special ids decode to their tags.
    pub fn decode(&self, ids: &[Id]) -> String {
        ids.iter().map(|&i| self.symbol(i)).collect()
    }

    /// Encodes a sentence, mapping blank lacuna cells to `<mask>`.
    pub fn encode_cells(&self, sentence: &Sentence) -> Vec<Id> {
        sentence
            .cells()
            .map(|cell| match cell {
                Cell::Visible(c) | Cell::Damaged(c) | Cell::Reconstructed(c) => self.encode_char(c),
                Cell::Blank => MASK,
            })
            .collect()
    }

    pub fn to_file_text(&self) -> String {
        let mut out = String::new();
        for tag in SPECIAL_TAGS {
            out.push_str(tag);
            out.push('\n');
        }
        for &c in &self.symbols {
            out.push(c);
            out.push('\n');
        }
        out
    }

    pub fn from_file_text(text: &str) -> Result<Self, VocabError> {
        let lines: Vec<&str> = text.split('\n').collect();
        let lines = match lines.split_last() {
            Some((&"", rest)) => rest,
            _ => &lines[..],
        };
        for (i, tag) in SPECIAL_TAGS.iter().enumerate() {
            if lines.get(i) != Some(tag) {
                return Err(VocabError::Malformed {
                    line: i + 1,
                    reason: format!("expected {tag}"),
                });
            }
        }
        let mut symbols = Vec::new();
        for (i, line) in lines.iter().enumerate().skip(NUM_SPECIALS) {
            let mut chars = line.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => symbols.push(c),
                _ => {
                    return Err(VocabError::Malformed {
                        line: i + 1,
                        reason: "expected exactly one character".into(),
                    })
                }
            }
        }
        let vocab = Self::from_symbols(symbols);
        if vocab.index.len() != vocab.symbols.len() {
            return Err(VocabError::Malformed {
                line: 0,
                reason: "duplicate symbols".into(),
            });
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.to_file_text())
    }

    pub fn load(path: &Path) -> Result<Self, VocabError> {
        Self::from_file_text(&fs::read_to_string(path)?)
    }

    /// SHA-256 of the vocabulary file text.
    pub fn digest(&self) -> String {
        sha256_hex(self.to_file_text().as_bytes())
    }
}

/// Vocabulary of every legible or reconstructed character in `train`.
pub fn build_vocab(train: &[Sentence]) -> Result<Vocabulary, VocabError> {
    if train.is_empty() {
        return Err(VocabError::EmptyCorpus);
    }
    let mut counts: HashMap<char, u64> = HashMap::new();
    for s in train {
        for cell in s.cells() {
            if let Cell::Visible(c) | Cell::Damaged(c) | Cell::Reconstructed(c) = cell {
                *counts.entry(c).or_default() += 1;
            }
        }
    }
    let mut symbols: Vec<(char, u64)> = counts.into_iter().collect();
    symbols.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(Vocabulary::from_symbols(
        symbols.into_iter().map(|(c, _)| c),
    ))
}
