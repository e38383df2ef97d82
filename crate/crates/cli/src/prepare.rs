use std::collections::HashMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use serde::Serialize;

use lacuna_core::corpus::{
    corpus_stats, load_dir, make_partition, Sentence, SentenceClass, StatsReport,
};
use lacuna_core::eval::build_gold_test;
use lacuna_core::masking::{
    apply_policy, write_masked_set, MaskDistribution, MaskPolicy, MaskedLine, MaskedSample, Remask,
};
use lacuna_core::vocab::{build_vocab, Vocabulary};

use crate::manifest::ManifestBuilder;
use crate::{CmdResult, Failure, PrepareArgs};

/// Offsets mixed into `--seed` so the two automatically masked test sets
/// draw independent masks.
const RANDOM_TEST_SALT: u64 = 0x7e57_0001;
const SMART_TEST_SALT: u64 = 0x7e57_0002;

#[derive(Debug, Serialize)]
struct Stats {
    vocab_size: usize,
    all: StatsReport,
    complete: StatsReport,
    gold: StatsReport,
    target: StatsReport,
    train: StatsReport,
    dev: StatsReport,
    test: StatsReport,
    gold_masked_characters: usize,
}

fn lines(sentences: &[&Sentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&s.serialize());
        out.push('\n');
    }
    out
}

fn masked_lines(sentences: &[&Sentence], samples: &[MaskedSample], vocab: &Vocabulary) -> String {
    let lines: Vec<MaskedLine> = sentences
        .iter()
        .zip(samples)
        .map(|(s, m)| MaskedLine::from_sample(&s.id, &s.plain_text(), m, vocab))
        .collect();
    write_masked_set(&lines)
}

fn auto_masked(
    sentences: &[&Sentence],
    vocab: &Vocabulary,
    distribution: MaskDistribution,
    seed: u64,
) -> anyhow::Result<String> {
    let ids: Vec<_> = sentences.iter().map(|s| vocab.encode_cells(s)).collect();
    let policy = MaskPolicy::new(distribution, Remask::Once, seed);
    let samples = apply_policy(&ids, &policy, vocab.len(), 0)?;
    Ok(masked_lines(sentences, &samples, vocab))
}

pub fn run(args: &PrepareArgs) -> CmdResult {
    if !args.corpus.is_dir() {
        return Err(Failure::input(anyhow!(
            "corpus directory {} does not exist",
            args.corpus.display()
        )));
    }
    let mut manifest = ManifestBuilder::new("prepare", args);
    manifest.seed("partition", args.seed);
    manifest.seed("test_random_mask", args.seed ^ RANDOM_TEST_SALT);
    manifest.seed("test_smart_mask", args.seed ^ SMART_TEST_SALT);

    let sentences = load_dir(&args.corpus).map_err(Failure::input)?;
    let mut inputs: Vec<_> = sentences.iter().map(|s| s.source_file.clone()).collect();
    inputs.dedup();
    for file in &inputs {
        manifest.input(Path::new(file))?;
    }

    let mut complete = Vec::new();
    let mut gold = Vec::new();
    let mut target = Vec::new();
    for s in &sentences {
        match s.classify() {
            SentenceClass::Complete => complete.push(s.clone()),
            SentenceClass::ReconstructedOnly => gold.push(s),
            SentenceClass::HasBlank => target.push(s),
        }
    }
    let partition = make_partition(&complete, args.seed).map_err(Failure::input)?;
    let by_id: HashMap<&str, &Sentence> = complete.iter().map(|s| (s.id.as_str(), s)).collect();
    let pick =
        |ids: &[String]| -> Vec<&Sentence> { ids.iter().map(|id| by_id[id.as_str()]).collect() };
    let (train, dev, test) = (
        pick(&partition.train),
        pick(&partition.dev),
        pick(&partition.test),
    );

    let train_owned: Vec<Sentence> = train.iter().map(|s| (*s).clone()).collect();
    let vocab = build_vocab(&train_owned).map_err(Failure::input)?;
    let gold_owned: Vec<Sentence> = gold.iter().map(|s| (*s).clone()).collect();
    let gold_samples = build_gold_test(&gold_owned, &vocab).map_err(Failure::input)?;
    let gold_masked: usize = gold_samples.iter().map(|s| s.mask_positions.len()).sum();

    let stats =
        |set: &[&Sentence]| corpus_stats(&set.iter().map(|s| (*s).clone()).collect::<Vec<_>>());
    let report = Stats {
        vocab_size: vocab.len(),
        all: corpus_stats(&sentences),
        complete: corpus_stats(&complete),
        gold: stats(&gold),
        target: stats(&target),
        train: stats(&train),
        dev: stats(&dev),
        test: stats(&test),
        gold_masked_characters: gold_masked,
    };

    let files: Vec<(&str, String)> = vec![
        ("partition.tsv", partition.manifest_text()),
        ("vocab.txt", vocab.to_file_text()),
        ("train.txt", lines(&train)),
        ("dev.txt", lines(&dev)),
        ("test.txt", lines(&test)),
        ("gold.txt", lines(&gold)),
        ("target.txt", lines(&target)),
        (
            "test_random.tsv",
            auto_masked(
                &test,
                &vocab,
                MaskDistribution::Random,
                args.seed ^ RANDOM_TEST_SALT,
            )?,
        ),
        (
            "test_smart.tsv",
            auto_masked(
                &test,
                &vocab,
                MaskDistribution::Smart,
                args.seed ^ SMART_TEST_SALT,
            )?,
        ),
        ("test_gold.tsv", masked_lines(&gold, &gold_samples, &vocab)),
        (
            "stats.json",
            serde_json::to_string_pretty(&report).context("serializing stats")? + "\n",
        ),
    ];

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for (name, text) in &files {
        let path = args.out.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        manifest.output(&path)?;
    }
    manifest.note("partition_hash", &partition.manifest_hash);
    manifest.note("vocab_digest", vocab.digest());
    manifest.note("vocab_size", vocab.len());
    manifest.note("sentences", sentences.len());
    manifest.note("train_dev_test", [train.len(), dev.len(), test.len()]);
    manifest.note("gold_sentences", gold.len());
    manifest.note("target_sentences", target.len());
    manifest.note("gold_masked_characters", gold_masked);
    manifest.note(
        "target_missing_characters",
        report.target.missing_characters,
    );
    manifest.write(&args.out.join("manifest.json"))?;

    log::info!(
        "{} sentences: train {} / dev {} / test {}, gold {}, target {}, vocabulary {}",
        sentences.len(),
        train.len(),
        dev.len(),
        test.len(),
        gold.len(),
        target.len(),
        vocab.len()
    );
    Ok(())
}

/// Loads `vocab.txt` from a prepared directory.
pub fn load_vocab(data: &Path) -> Result<Vocabulary, Failure> {
    let path = data.join("vocab.txt");
    Vocabulary::load(&path)
        .with_context(|| format!("loading {}", path.display()))
        .map_err(Failure::input)
}
