//! Manuscript lines with Leiden-style lacuna markup.
//!
//! The accepted grammar is deliberately small:
//!
//! * `[` `.`{n} `]` is a blank lacuna of `n` missing characters,
//! * `[` letters `]` is an editor's reconstruction,
//! * a letter followed by U+0323 COMBINING DOT BELOW is a damaged but legible character.
//!
//! Every [`Segment`] keeps the raw bytes it was parsed from, so serializing a
//! [`Sentence`] reproduces the input line exactly. The normalized text used by
//! the models is lowercased and stripped of combining diacritics.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::sha256_hex;

/// U+0323 COMBINING DOT BELOW.
pub const UNDERDOT: char = '\u{0323}';

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarkupError {
    #[error("unbalanced brackets at column {column}")]
    UnbalancedBrackets { column: usize },
    #[error("bracket at column {column} mixes dots and letters")]
    MixedBracketContent { column: usize },
    #[error("empty brackets at column {column}")]
    EmptyBrackets { column: usize },
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{file}:{line}: {source}")]
    Markup {
        file: String,
        line: usize,
        #[source]
        source: MarkupError,
    },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no .txt files found in {0}")]
    NoInputFiles(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentKind {
    Visible,
    BlankLacuna,
    ReconstructedLacuna,
    DamagedVisible,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub kind: SegmentKind,
    /// Normalized text; empty for blank lacunae.
    pub text: String,
    /// Number of character cells the segment occupies.
    pub length: usize,
    raw: String,
}

impl Segment {
    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn is_lacuna(&self) -> bool {
        matches!(
            self.kind,
            SegmentKind::BlankLacuna | SegmentKind::ReconstructedLacuna
        )
    }
}

/// One character position of a sentence as seen by the models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Visible(char),
    Damaged(char),
    Reconstructed(char),
    Blank,
}

impl Cell {
    /// The character if the cell is legible on the manuscript.
    pub fn legible(self) -> Option<char> {
        match self {
            Cell::Visible(c) | Cell::Damaged(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SentenceClass {
    Complete,
    ReconstructedOnly,
    HasBlank,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub id: String,
    pub segments: Vec<Segment>,
    pub source_file: String,
}

impl Sentence {
    pub fn serialize(&self) -> String {
        self.segments.iter().map(|s| s.raw.as_str()).collect()
    }

    pub fn classify(&self) -> SentenceClass {
        classify(self)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.segments.iter().flat_map(|seg| {
            let chars: Box<dyn Iterator<Item = Cell>> = match seg.kind {
                SegmentKind::Visible => Box::new(seg.text.chars().map(Cell::Visible)),
                SegmentKind::DamagedVisible => Box::new(seg.text.chars().map(Cell::Damaged)),
                SegmentKind::ReconstructedLacuna => {
                    Box::new(seg.text.chars().map(Cell::Reconstructed))
                }
                SegmentKind::BlankLacuna => Box::new(std::iter::repeat_n(Cell::Blank, seg.length)),
            };
            chars
        })
    }

    /// Number of character cells, lacunae included.
    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.length).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Normalized text with reconstructions read as visible and blanks omitted.
    pub fn plain_text(&self) -> String {
        self.cells()
            .filter_map(|c| match c {
                Cell::Visible(c) | Cell::Damaged(c) | Cell::Reconstructed(c) => Some(c),
                Cell::Blank => None,
            })
            .collect()
    }

    pub fn blank_lacunae(&self) -> impl Iterator<Item = &Segment> {
        self.segments
            .iter()
            .filter(|s| s.kind == SegmentKind::BlankLacuna)
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

pub fn is_combining_mark(c: char) -> bool {
    matches!(c,
        '\u{0300}'..='\u{036F}'
        | '\u{1AB0}'..='\u{1AFF}'
        | '\u{1DC0}'..='\u{1DFF}'
        | '\u{20D0}'..='\u{20FF}'
        | '\u{FE20}'..='\u{FE2F}'
        | '\u{2CEF}'..='\u{2CF1}')
}

/// Lowercase and drop combining diacritics.
pub fn normalize_text(s: &str) -> String {
    s.chars()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .collect()
}

#[derive(Default)]
struct VisibleBuf {
    raw: String,
    text: String,
}

impl VisibleBuf {
    fn flush(&mut self, out: &mut Vec<Segment>) {
        if self.raw.is_empty() {
            return;
        }
        let raw = std::mem::take(&mut self.raw);
        let text = std::mem::take(&mut self.text);
        out.push(Segment {
            kind: SegmentKind::Visible,
            length: text.chars().count(),
            text,
            raw,
        });
    }
}

/// Parse one line of marked-up manuscript text.
pub fn parse_line(raw: &str) -> Result<Vec<Segment>, MarkupError> {
    let chars: Vec<char> = raw.chars().collect();
    let mut segments = Vec::new();
    let mut visible = VisibleBuf::default();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '[' => {
                visible.flush(&mut segments);
                let open = i;
                let close = chars[open + 1..]
                    .iter()
                    .position(|&c| c == '[' || c == ']')
                    .map(|p| p + open + 1);
                let close = match close {
                    Some(p) if chars[p] == ']' => p,
                    _ => return Err(MarkupError::UnbalancedBrackets { column: open + 1 }),
                };
                segments.push(bracket_segment(&chars[open + 1..close], open + 1)?);
                i = close + 1;
            }
            ']' => return Err(MarkupError::UnbalancedBrackets { column: i + 1 }),
            _ => {
                let mut end = i + 1;
                while end < chars.len() && is_combining_mark(chars[end]) {
                    end += 1;
                }
                let cluster = &chars[i..end];
                if !is_combining_mark(c) && cluster[1..].contains(&UNDERDOT) {
                    visible.flush(&mut segments);
                    let text: String = c.to_lowercase().collect();
                    segments.push(Segment {
                        kind: SegmentKind::DamagedVisible,
                        length: text.chars().count(),
                        text,
                        raw: cluster.iter().collect(),
                    });
                } else {
                    visible.raw.extend(cluster);
                    visible
                        .text
                        .push_str(&normalize_text(&cluster.iter().collect::<String>()));
                }
                i = end;
            }
        }
    }
    visible.flush(&mut segments);
    Ok(segments)
}

fn bracket_segment(content: &[char], column: usize) -> Result<Segment, MarkupError> {
    let raw: String = std::iter::once('[')
        .chain(content.iter().copied())
        .chain(std::iter::once(']'))
        .collect();
    let dots = content.iter().filter(|&&c| c == '.').count();
    if content.is_empty() {
        return Err(MarkupError::EmptyBrackets { column });
    }
    if dots == content.len() {
        return Ok(Segment {
            kind: SegmentKind::BlankLacuna,
            text: String::new(),
            length: dots,
            raw,
        });
    }
    if dots > 0 {
        return Err(MarkupError::MixedBracketContent { column });
    }
    let text = normalize_text(&content.iter().collect::<String>());
    if text.is_empty() {
        return Err(MarkupError::EmptyBrackets { column });
    }
    Ok(Segment {
        kind: SegmentKind::ReconstructedLacuna,
        length: text.chars().count(),
        text,
        raw,
    })
}

impl Sentence {
    pub fn parse(
        id: impl Into<String>,
        source_file: impl Into<String>,
        raw: &str,
    ) -> Result<Self, MarkupError> {
        Ok(Sentence {
            id: id.into(),
            segments: parse_line(raw)?,
            source_file: source_file.into(),
        })
    }
}

pub fn classify(s: &Sentence) -> SentenceClass {
    let mut reconstructed = false;
    for seg in &s.segments {
        match seg.kind {
            SegmentKind::BlankLacuna => return SentenceClass::HasBlank,
            SegmentKind::ReconstructedLacuna => reconstructed = true,
            _ => {}
        }
    }
    if reconstructed {
        SentenceClass::ReconstructedOnly
    } else {
        SentenceClass::Complete
    }
}

/// Parse every line of `text`. Empty lines are skipped; ids are `<stem>:<line>`.
pub fn parse_text(text: &str, source_file: &str) -> Result<Vec<Sentence>, CorpusError> {
    let stem = Path::new(source_file)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| source_file.to_string());
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() {
            log::warn!("{source_file}:{}: skipping empty line", n + 1);
            continue;
        }
        let sentence =
            Sentence::parse(format!("{stem}:{}", n + 1), source_file, line).map_err(|source| {
                CorpusError::Markup {
                    file: source_file.to_string(),
                    line: n + 1,
                    source,
                }
            })?;
        out.push(sentence);
    }
    Ok(out)
}

pub fn load_file(path: &Path) -> Result<Vec<Sentence>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_text(&text, &path.display().to_string())
}

/// Load every `*.txt` file of a directory, in file-name order.
pub fn load_dir(dir: &Path) -> Result<Vec<Sentence>, CorpusError> {
    let entries = fs::read_dir(dir).map_err(|source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| CorpusError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.extension().is_some_and(|e| e == "txt") {
            files.push(path);
        }
    }
    if files.is_empty() {
        return Err(CorpusError::NoInputFiles(dir.to_path_buf()));
    }
    files.sort();
    let mut out = Vec::new();
    for f in files {
        out.extend(load_file(&f)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusPartition {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
    pub manifest_hash: String,
}

/// Split sizes `(train, dev, test)` for `n` sentences: the held-out tenth is
/// rounded up and halved, the extra sentence going to test.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let held_out = n.div_ceil(10);
    let dev = held_out / 2;
    (n - held_out, dev, held_out - dev)
}

pub fn make_partition(complete: &[Sentence], seed: u64) -> Result<CorpusPartition, CorpusError> {
    let ids: Vec<&str> = complete.iter().map(|s| s.id.as_str()).collect();
    partition_ids(&ids, seed)
}

pub fn partition_ids(ids: &[&str], seed: u64) -> Result<CorpusPartition, CorpusError> {
    if ids.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut shuffled: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let (n_train, n_dev, _) = split_sizes(shuffled.len());
    let test = shuffled.split_off(n_train + n_dev);
    let dev = shuffled.split_off(n_train);
    let mut partition = CorpusPartition {
        train: shuffled,
        dev,
        test,
        seed,
        manifest_hash: String::new(),
    };
    partition.manifest_hash = sha256_hex(partition.manifest_text().as_bytes());
    Ok(partition)
}

impl CorpusPartition {
    /// `<split>\t<sentence-id>` lines.
    pub fn manifest_text(&self) -> String {
        let mut out = String::new();
        for (name, ids) in [
            ("train", &self.train),
            ("dev", &self.dev),
            ("test", &self.test),
        ] {
            for id in ids {
                out.push_str(name);
                out.push('\t');
                out.push_str(id);
                out.push('\n');
            }
        }
        out
    }

    pub fn write_manifest(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.manifest_text())
    }

    pub fn read_manifest(path: &Path, seed: u64) -> std::io::Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut p = CorpusPartition {
            train: Vec::new(),
            dev: Vec::new(),
            test: Vec::new(),
            seed,
            manifest_hash: sha256_hex(text.as_bytes()),
        };
        for line in text.lines() {
            let (split, id) = line.split_once('\t').ok_or_else(|| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("bad line {line:?}"),
                )
            })?;
            let target = match split {
                "train" => &mut p.train,
                "dev" => &mut p.dev,
                "test" => &mut p.test,
                other => {
                    return Err(std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("unknown split {other:?}"),
                    ))
                }
            };
            target.push(id.to_string());
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub sentences: usize,
    pub characters: usize,
    pub min_length: usize,
    pub mean_length: f64,
    pub max_length: usize,
    pub lacunae: usize,
    pub missing_characters: usize,
    pub gap_length_histogram: BTreeMap<usize, usize>,
}

impl StatsReport {
    pub fn mean_gap_length(&self) -> f64 {
        if self.lacunae == 0 {
            0.0
        } else {
            self.missing_characters as f64 / self.lacunae as f64
        }
    }
}

pub fn corpus_stats(sentences: &[Sentence]) -> StatsReport {
    let mut report = StatsReport::default();
    if sentences.is_empty() {
        return report;
    }
    report.min_length = usize::MAX;
    for s in sentences {
        let len = s.len();
        report.sentences += 1;
        report.characters += len;
        report.min_length = report.min_length.min(len);
        report.max_length = report.max_length.max(len);
        for seg in s.segments.iter().filter(|s| s.is_lacuna()) {
            report.lacunae += 1;
            report.missing_characters += seg.length;
            *report.gap_length_histogram.entry(seg.length).or_default() += 1;
        }
    }
    report.mean_length = report.characters as f64 / report.sentences as f64;
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(s: &str) -> Vec<(SegmentKind, String, usize)> {
        parse_line(s)
            .unwrap()
            .into_iter()
            .map(|s| (s.kind, s.text, s.length))
            .collect()
    }

    #[test]
    fn blank_lacuna() {
        assert_eq!(
            kinds("ab[...]cd"),
            vec![
                (SegmentKind::Visible, "ab".into(), 2),
                (SegmentKind::BlankLacuna, "".into(), 3),
                (SegmentKind::Visible, "cd".into(), 2),
            ]
        );
    }

    #[test]
    fn no_markup() {
        assert_eq!(
            kinds("abcd"),
            vec![(SegmentKind::Visible, "abcd".into(), 4)]
        );
    }

    #[test]
    fn reconstruction() {
        assert_eq!(
            kinds("a[bc]d"),
            vec![
                (SegmentKind::Visible, "a".into(), 1),
                (SegmentKind::ReconstructedLacuna, "bc".into(), 2),
                (SegmentKind::Visible, "d".into(), 1),
            ]
        );
    }

    #[test]
    fn underdot_becomes_damaged_visible() {
        let line = "ⲁⲩⲱⲙⲛ\u{0323}ⲡⲉ";
        let segs = parse_line(line).unwrap();
        assert_eq!(segs.len(), 3);
        assert_eq!(segs[1].kind, SegmentKind::DamagedVisible);
        assert_eq!(segs[1].text, "ⲛ");
        assert_eq!(segs[1].raw(), "ⲛ\u{0323}");
        let s = Sentence::parse("x", "f", line).unwrap();
        assert_eq!(s.serialize(), line);
        assert_eq!(s.classify(), SentenceClass::Complete);
    }

    #[test]
    fn underdot_with_overline_keeps_raw() {
        let line = "ϫⲉϩⲙ\u{0323}\u{0304}[...]";
        let s = Sentence::parse("x", "f", line).unwrap();
        assert_eq!(s.segments[1].kind, SegmentKind::DamagedVisible);
        assert_eq!(s.segments[1].text, "ⲙ");
        assert_eq!(s.serialize(), line);
    }

    #[test]
    fn lowercases_and_strips_diacritics() {
        let s = Sentence::parse("x", "f", "ⲀⲨⲰ ⲛ\u{0304}ⲧⲉ").unwrap();
        assert_eq!(s.plain_text(), "ⲁⲩⲱ ⲛⲧⲉ");
        assert_eq!(s.serialize(), "ⲀⲨⲰ ⲛ\u{0304}ⲧⲉ");
    }

    #[test]
    fn malformed_brackets() {
        assert_eq!(
            parse_line("ab[cd"),
            Err(MarkupError::UnbalancedBrackets { column: 3 })
        );
        assert_eq!(
            parse_line("ab]cd"),
            Err(MarkupError::UnbalancedBrackets { column: 3 })
        );
        assert_eq!(
            parse_line("a[b[c]]"),
            Err(MarkupError::UnbalancedBrackets { column: 2 })
        );
        assert_eq!(
            parse_line("a[..b]"),
            Err(MarkupError::MixedBracketContent { column: 2 })
        );
        assert_eq!(
            parse_line("a[]"),
            Err(MarkupError::EmptyBrackets { column: 2 })
        );
    }

    #[test]
    fn classification() {
        let c = |s: &str| Sentence::parse("x", "f", s).unwrap().classify();
        assert_eq!(c("abc"), SentenceClass::Complete);
        assert_eq!(c("a[b]c"), SentenceClass::ReconstructedOnly);
        assert_eq!(c("a[..][b]"), SentenceClass::HasBlank);
    }

    #[test]
    fn parse_text_reports_line_numbers_and_skips_empty() {
        let sentences = parse_text("abc\n\na[b]c\n", "dir/doc.txt").unwrap();
        assert_eq!(sentences.len(), 2);
        assert_eq!(sentences[1].id, "doc:3");
        let err = parse_text("abc\nab[c\n", "doc.txt").unwrap_err();
        assert_eq!(
            err.to_string(),
            "doc.txt:2: unbalanced brackets at column 3"
        );
    }

    #[test]
    fn split_sizes_for_reported_corpus() {
        assert_eq!(split_sizes(100), (90, 5, 5));
        // 32,676 / 1,815 / 1,816 is the split of 36,307 sentences.
        assert_eq!(split_sizes(36_307), (32_676, 1_815, 1_816));
        let (train, dev, test) = split_sizes(36_252);
        assert!((train as f64 - 0.9 * 36_252.0).abs() <= 1.0);
        assert!((dev as f64 - 0.05 * 36_252.0).abs() <= 1.0);
        assert!((test as f64 - 0.05 * 36_252.0).abs() <= 1.0);
    }

    #[test]
    fn split_proportions_hold_for_all_sizes() {
        for n in 20..20_000usize {
            let (train, dev, test) = split_sizes(n);
            assert_eq!(train + dev + test, n);
            let n = n as f64;
            assert!((train as f64 - 0.9 * n).abs() <= 1.0, "{n}");
            assert!((dev as f64 - 0.05 * n).abs() <= 1.0, "{n}");
            assert!((test as f64 - 0.05 * n).abs() <= 1.0, "{n}");
        }
    }

    #[test]
    fn partition_is_deterministic_and_disjoint() {
        let ids: Vec<String> = (0..100).map(|i| format!("s{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let a = partition_ids(&refs, 7).unwrap();
        let b = partition_ids(&refs, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.train.len(), a.dev.len(), a.test.len()), (90, 5, 5));
        let mut all: Vec<&String> = a.train.iter().chain(&a.dev).chain(&a.test).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 100);
        let c = partition_ids(&refs, 8).unwrap();
        assert_ne!(a.manifest_hash, c.manifest_hash);
        assert!(matches!(
            partition_ids(&[], 1),
            Err(CorpusError::EmptyCorpus)
        ));
    }

    #[test]
    fn stats() {
        assert_eq!(corpus_stats(&[]), StatsReport::default());
        let s = parse_text("ab[...]cd\na[bc]d[e]\n", "f.txt").unwrap();
        let r = corpus_stats(&s);
        assert_eq!(r.sentences, 2);
        assert_eq!(r.characters, 7 + 5);
        assert_eq!((r.min_length, r.max_length), (5, 7));
        assert_eq!(r.lacunae, 3);
        assert_eq!(r.missing_characters, 6);
        assert_eq!(
            r.gap_length_histogram,
            BTreeMap::from([(1, 1), (2, 1), (3, 1)])
        );
    }
}
