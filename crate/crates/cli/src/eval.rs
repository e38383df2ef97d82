use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};

use lacuna_core::baselines::{ModeBaseline, RandomBaseline, TrigramTable};
use lacuna_core::checkpoint::Checkpoint;
use lacuna_core::corpus::load_file;
use lacuna_core::eval::{evaluate, render_table, EvalReport, ModelPredictor, Predictor};
use lacuna_core::masking::{read_masked_set, MaskedLine};
use lacuna_core::vocab::{Id, Vocabulary};

use crate::manifest::{sidecar, ManifestBuilder};
use crate::prepare::load_vocab;
use crate::{BaselineArg, CmdResult, EvalArgs, Failure};

struct TestSet {
    name: String,
    lines: Vec<MaskedLine>,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn load_test_set(path: &Path) -> Result<TestSet, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::input)?;
    let lines = read_masked_set(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::input)?;
    Ok(TestSet {
        name: stem(path),
        lines,
    })
}

fn score(
    predictor: &dyn Predictor,
    vocab: &Vocabulary,
    set: &TestSet,
    model_id: &str,
    seed: Option<u64>,
) -> Result<EvalReport, Failure> {
    let samples: Vec<_> = set.lines.iter().map(|l| l.to_sample(vocab)).collect();
    evaluate(predictor, &samples, &set.name, model_id, seed).map_err(Failure::input)
}

pub fn run(args: &EvalArgs) -> CmdResult {
    if args.ckpt.is_empty() && args.baseline.is_empty() {
        return Err(Failure::input(anyhow!(
            "give at least one --ckpt or --baseline"
        )));
    }
    let mut manifest = ManifestBuilder::new("eval", args);
    manifest.seed("random_baseline", args.seed);
    let sets = args
        .test_set
        .iter()
        .map(|p| load_test_set(p))
        .collect::<Result<Vec<_>, _>>()?;
    for p in &args.test_set {
        manifest.input(p)?;
    }

    let mut reports = Vec::new();
    for path in &args.ckpt {
        let ckpt = Checkpoint::load(path)
            .with_context(|| format!("loading {}", path.display()))
            .map_err(Failure::input)?;
        manifest.input(path)?;
        let id = stem(path);
        let predictor = ModelPredictor::new(&ckpt.model);
        for set in &sets {
            reports.push(score(
                &predictor,
                &ckpt.vocab,
                set,
                &id,
                Some(ckpt.meta.seed),
            )?);
        }
    }

    if !args.baseline.is_empty() {
        let data = args
            .data
            .as_deref()
            .ok_or_else(|| Failure::input(anyhow!("baselines need --data")))?;
        let vocab = load_vocab(data)?;
        let train_path = data.join("train.txt");
        manifest.input(&train_path)?;
        manifest.input(&data.join("vocab.txt"))?;
        let train: Vec<Vec<Id>> = load_file(&train_path)
            .map_err(Failure::input)?
            .iter()
            .map(|s| vocab.encode_cells(s))
            .collect();
        for &b in &args.baseline {
            let (id, seed, predictor): (&str, Option<u64>, Box<dyn Predictor>) = match b {
                BaselineArg::Random => (
                    "random",
                    Some(args.seed),
                    Box::new(RandomBaseline::new(vocab.len(), args.seed).map_err(Failure::input)?),
                ),
                BaselineArg::Mode => (
                    "mode",
                    None,
                    Box::new(ModeBaseline::fit(&train).map_err(Failure::input)?),
                ),
                BaselineArg::Trigram => {
                    let table = TrigramTable::build(&train, vocab.len(), args.trigram_k)
                        .map_err(Failure::input)?;
                    if let Some(dump) = &args.trigram_dump {
                        fs::write(dump, table.to_text(&vocab))
                            .with_context(|| format!("writing {}", dump.display()))?;
                        manifest.output(dump)?;
                    }
                    ("trigram", None, Box::new(table))
                }
            };
            for set in &sets {
                reports.push(score(predictor.as_ref(), &vocab, set, id, seed)?);
            }
        }
    }

    let table = render_table(&reports);
    print!("{table}");
    let json = serde_json::to_string_pretty(&reports).context("serializing reports")?;
    if let Some(dir) = args.report.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(&args.report, json + "\n")
        .with_context(|| format!("writing {}", args.report.display()))?;
    let table_path = sidecar(&args.report, "table.txt");
    fs::write(&table_path, &table).with_context(|| format!("writing {}", table_path.display()))?;
    manifest.output(&args.report)?;
    manifest.output(&table_path)?;
    manifest.write(&sidecar(&args.report, "manifest.json"))?;
    Ok(())
}
