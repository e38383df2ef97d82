//! Deterministic pseudo-Sahidic text for smoke tests, benchmarks and demos.
//!
//! Sentences are drawn from a word-level bigram chain over a small Coptic
//! lexicon, so the character statistics have real local structure without
//! needing the full corpus. Lines use the same markup as real corpus files:
//! supralinear strokes (U+0304), occasional underdots, `[...]` gaps and
//! `[abc]` reconstructions.

use std::fs;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::UNDERDOT;

const LEXICON: &[&str] = &[
    "ⲁⲩⲱ",
    "ⲛ\u{304}ⲧⲉ",
    "ⲡⲛⲟⲩⲧⲉ",
    "ⲡϫⲟⲉⲓⲥ",
    "ⲉⲃⲟⲗ",
    "ϩⲛ\u{304}",
    "ⲁϥϫⲟⲟⲥ",
    "ϫⲉ",
    "ⲙ\u{304}ⲙⲟϥ",
    "ⲛⲁϥ",
    "ⲡⲣⲱⲙⲉ",
    "ⲧⲙⲁⲁⲩ",
    "ⲛⲓⲙ",
    "ⲉⲧⲃⲉ",
    "ⲁⲗⲗⲁ",
    "ⲙⲟⲟⲩ",
    "ⲉϩⲣⲁⲓ",
    "ⲉⲡϫⲓⲥⲉ",
    "ⲡⲉ",
    "ⲧⲉ",
    "ⲛⲉ",
    "ⲟⲩ",
    "ⲡⲁⲓ",
    "ⲛⲁⲃⲱⲕ",
    "ⲙⲟⲟϣⲉ",
    "ⲛⲁⲁⲗⲉ",
    "ⲧⲁⲡⲣⲟ",
    "ⲟⲩⲟϭⲉ",
    "ⲧⲉϩⲛⲉ",
    "ⲡⲁⲓϭⲉ",
    "ϭⲁⲗⲟϫ",
    "ⲁⲥⲡⲁⲍⲉ",
    "ⲙ\u{304}ⲙⲟⲥ",
    "ⲛ\u{304}ϩⲁϩ",
    "ⲛ\u{304}ⲥⲟⲡ",
    "ⲁⲓⲁⲗⲉ",
    "ⲡⲉϫⲁϥ",
    "ⲁⲛⲟⲕ",
    "ⲛ\u{304}ⲧⲟⲕ",
    "ϩⲓⲧⲛ\u{304}",
    "ⲡⲉⲭⲥ",
    "ⲓⲏⲥⲟⲩⲥ",
    "ⲙⲁⲣⲓⲁ",
    "ⲧⲉⲕⲕⲗⲏⲥⲓⲁ",
    "ⲡⲉⲡⲛⲉⲩⲙⲁ",
    "ⲉⲧⲟⲩⲁⲁⲃ",
    "ⲥⲱⲧⲙ\u{304}",
    "ⲉⲓⲣⲉ",
    "ⲟⲩⲱϣ",
    "ϣⲁϫⲉ",
    "ⲣⲱⲙⲉ",
    "ⲥϩⲓⲙⲉ",
    "ϣⲏⲣⲉ",
    "ⲉⲓⲱⲧ",
    "ⲡⲕⲁϩ",
    "ⲙ\u{304}ⲡⲉ",
    "ⲁϥⲃⲱⲕ",
    "ⲁⲩⲉⲓ",
    "ⲉⲣⲟϥ",
    "ⲉⲣⲟⲥ",
    "ⲛ\u{304}ⲛⲉϥ",
    "ⲙⲁⲑⲏⲧⲏⲥ",
    "ⲁⲩⲱϣ",
    "ⲉⲃⲟⲗ",
    "ⲛ\u{304}ⲥⲁ",
    "ⲧⲡⲉ",
    "ⲡⲟⲩⲟⲉⲓⲛ",
    "ⲡⲕⲁⲕⲉ",
    "ⲁⲛⲟⲛ",
    "ⲛ\u{304}ⲧⲟϥ",
    "ⲉϥⲛⲁ",
    "ⲥⲟⲟⲩⲛ",
    "ⲙ\u{304}ⲙⲁⲩ",
    "ϩⲓϫⲛ\u{304}",
    "ⲛ\u{304}ⲧⲉⲣⲉ",
    "ⲁϥⲛⲁⲩ",
    "ⲉⲡⲙⲟⲟⲩ",
    "ⲡⲟⲗⲓⲥ",
    "ⲧⲉⲯⲩⲭⲏ",
    "ⲡⲥⲱⲙⲁ",
    "ⲁⲅⲁⲑⲟⲛ",
    "ⲡⲉⲑⲟⲟⲩ",
    "ⲙ\u{304}ⲡⲣ\u{304}",
    "ⲟⲩⲟⲛ",
];

const PUNCTUATION: &[&str] = &["·", ":", "⳾"];

/// Generated lines, each in corpus markup.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynthCorpus {
    pub complete: Vec<String>,
    pub reconstructed: Vec<String>,
    pub blank: Vec<String>,
}

pub struct Generator {
    rng: ChaCha8Rng,
    /// Per word, a small set of preferred successors.
    successors: Vec<Vec<usize>>,
}

impl Generator {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let successors = (0..LEXICON.len())
            .map(|_| (0..4).map(|_| zipf(&mut rng, LEXICON.len())).collect())
            .collect();
        Generator { rng, successors }
    }

    /// A sentence of plain characters (no markup, no underdots).
    pub fn sentence(&mut self) -> String {
        let words = self.rng.random_range(2..=18);
        let mut out = Vec::with_capacity(words + 1);
        let mut w = zipf(&mut self.rng, LEXICON.len());
        for _ in 0..words {
            out.push(LEXICON[w]);
            w = if self.rng.random_bool(0.7) {
                let s = &self.successors[w];
                s[self.rng.random_range(0..s.len())]
            } else {
                zipf(&mut self.rng, LEXICON.len())
            };
        }
        let mut line = out.join(" ");
        if self.rng.random_bool(0.3) {
            line.push_str(PUNCTUATION[self.rng.random_range(0..PUNCTUATION.len())]);
        }
        if self.rng.random_bool(0.1) {
            // Capitalized initial, as in some editions.
            let mut chars = line.chars();
            if let Some(first) = chars.next() {
                line = first.to_uppercase().chain(chars).collect();
            }
        }
        line
    }

    fn add_underdots(&mut self, line: &str, rate: f64) -> String {
        let mut out = String::with_capacity(line.len());
        let mut in_bracket = false;
        for c in line.chars() {
            out.push(c);
            match c {
                '[' => in_bracket = true,
                ']' => in_bracket = false,
                _ if !in_bracket
                    && c.is_alphabetic()
                    && !crate::corpus::is_combining_mark(c)
                    && self.rng.random_bool(rate) =>
                {
                    out.push(UNDERDOT);
                }
                _ => {}
            }
        }
        out
    }

    /// Brackets one to three spans of the sentence, either keeping their
    /// letters (reconstruction) or replacing them with dots (blank gap).
    fn with_lacunae(&mut self, blank: bool) -> String {
        loop {
            let text = self.sentence();
            // Work on base-character clusters so a span never splits a letter
            // from its diacritics.
            let clusters = clusters(&text);
            let n = clusters.len();
            if n < 4 {
                continue;
            }
            let spans = self.rng.random_range(1..=3);
            let mut marked = vec![false; n];
            for _ in 0..spans {
                let len = match self.rng.random_range(0..100) {
                    0..50 => 1,
                    50..75 => 2,
                    75..88 => 3,
                    _ => self.rng.random_range(4..=8),
                }
                .min(n - 1);
                let start = self.rng.random_range(0..=n - len);
                marked[start..start + len].fill(true);
            }
            let mut out = String::new();
            for i in 0..n {
                let open = marked[i] && (i == 0 || !marked[i - 1]);
                let close = marked[i] && (i + 1 == n || !marked[i + 1]);
                if open {
                    out.push('[');
                }
                if marked[i] && blank {
                    out.push('.');
                } else {
                    out.push_str(&clusters[i]);
                }
                if close {
                    out.push(']');
                }
            }
            return self.add_underdots(&out, 0.02);
        }
    }

    pub fn corpus(&mut self, complete: usize, reconstructed: usize, blank: usize) -> SynthCorpus {
        let complete = (0..complete)
            .map(|_| {
                let s = self.sentence();
                self.add_underdots(&s, 0.01)
            })
            .collect();
        let reconstructed = (0..reconstructed)
            .map(|_| self.with_lacunae(false))
            .collect();
        let blank = (0..blank).map(|_| self.with_lacunae(true)).collect();
        SynthCorpus {
            complete,
            reconstructed,
            blank,
        }
    }
}

fn clusters(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for c in text.chars() {
        match out.last_mut() {
            Some(last) if crate::corpus::is_combining_mark(c) => last.push(c),
            _ => out.push(c.to_string()),
        }
    }
    out
}

fn zipf<R: Rng>(rng: &mut R, n: usize) -> usize {
    // Inverse-CDF sampling of p(k) ~ 1/(k+1) via its continuous approximation.
    let h = ((n + 1) as f64).ln();
    let u: f64 = rng.random();
    (((u * h).exp() - 1.0) as usize).min(n - 1)
}

pub fn synth_corpus(seed: u64, complete: usize, reconstructed: usize, blank: usize) -> SynthCorpus {
    Generator::new(seed).corpus(complete, reconstructed, blank)
}

/// Writes the corpus as three documents with the lines interleaved the way
/// real editions mix complete and damaged sentences.
pub fn write_corpus_dir(dir: &Path, corpus: &SynthCorpus) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut all: Vec<&String> = corpus
        .complete
        .iter()
        .chain(&corpus.reconstructed)
        .chain(&corpus.blank)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(all.len() as u64);
    rand::seq::SliceRandom::shuffle(&mut all[..], &mut rng);
    let per_doc = all.len().div_ceil(3).max(1);
    for (i, chunk) in all.chunks(per_doc).enumerate() {
        let mut text = String::new();
        for line in chunk {
            text.push_str(line);
            text.push('\n');
        }
        fs::write(dir.join(format!("synth_{i:02}.txt")), text)?;
    }
    Ok(())
}
