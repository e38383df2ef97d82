use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};

use lacuna_core::checkpoint::Checkpoint;
use lacuna_core::corpus::Sentence;
use lacuna_core::rank::{self, RankError};
use lacuna_service::{CorsConfig, LoadedModel, PredictResponse, RankResponse};

use crate::{CmdResult, Failure, PredictArgs, RankArgs, ServeArgs};

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    Checkpoint::load(path)
        .with_context(|| format!("loading {}", path.display()))
        .map_err(Failure::input)
}

fn parse_text(text: &str) -> Result<Sentence, Failure> {
    Sentence::parse("query", "command line", text)
        .with_context(|| format!("parsing {text:?}"))
        .map_err(Failure::query)
}

fn query_error(e: RankError) -> Failure {
    match e {
        RankError::Model(_) => Failure::from(anyhow::Error::new(e)),
        _ => Failure::query(e),
    }
}

pub fn predict(args: &PredictArgs) -> CmdResult {
    let ckpt = load_checkpoint(&args.ckpt)?;
    let sentence = parse_text(&args.text)?;
    let (filled_text, positions) =
        rank::predict(&sentence, &ckpt.model, &ckpt.vocab, args.top_k).map_err(query_error)?;
    if args.json {
        let body = PredictResponse {
            filled_text,
            positions,
        };
        println!(
            "{}",
            serde_json::to_string_pretty(&body).context("serializing")?
        );
        return Ok(());
    }
    println!("{filled_text}");
    for p in &positions {
        let alts: Vec<String> = p
            .top_k
            .iter()
            .map(|c| format!("{} {:.4}", c.char, c.log_prob))
            .collect();
        println!("{:>4}  {}", p.index, alts.join("  "));
    }
    Ok(())
}

fn read_candidates(args: &RankArgs) -> Result<Vec<String>, Failure> {
    let mut out: Vec<String> = args
        .candidates
        .iter()
        .map(|c| c.trim().to_string())
        .filter(|c| !c.is_empty())
        .collect();
    if let Some(path) = &args.candidates_file {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(Failure::input)?;
        out.extend(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from),
        );
    }
    Ok(out)
}

pub fn rank(args: &RankArgs) -> CmdResult {
    let ckpt = load_checkpoint(&args.ckpt)?;
    let sentence = parse_text(&args.text)?;
    let candidates = read_candidates(args)?;
    let ranked = rank::rank_candidates(&sentence, &candidates, &ckpt.model, &ckpt.vocab)
        .map_err(query_error)?;
    if args.json {
        let body = RankResponse { ranked };
        println!(
            "{}",
            serde_json::to_string_pretty(&body).context("serializing")?
        );
        return Ok(());
    }
    let width = ranked
        .iter()
        .map(|r| r.text.chars().count())
        .max()
        .unwrap_or(0)
        .max(9);
    println!("rank  {:<width$}  log prob (natural)", "candidate");
    for r in &ranked {
        println!("{:>4}  {:<width$}  {:.4}", r.rank, r.text, r.log_prob);
    }
    Ok(())
}

fn split_model_arg(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((id, path)) if !id.is_empty() => (id.to_string(), PathBuf::from(path)),
        _ => {
            let path = PathBuf::from(arg);
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| arg.to_string());
            (id, path)
        }
    }
}

pub fn serve(args: &ServeArgs) -> CmdResult {
    let mut models = Vec::new();
    for arg in &args.ckpt {
        let (id, path) = split_model_arg(arg);
        if models.iter().any(|m: &LoadedModel| m.id == id) {
            return Err(Failure::input(anyhow!("model id {id:?} given twice")));
        }
        let checkpoint = load_checkpoint(&path)?;
        log::info!("loaded {id} from {}", path.display());
        models.push(LoadedModel { id, checkpoint });
    }
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .with_context(|| format!("bad address {}:{}", args.host, args.port))
        .map_err(Failure::input)?;
    let cors = CorsConfig {
        origins: (!args.cors_origin.is_empty()).then(|| args.cors_origin.clone()),
    };
    let app = lacuna_service::router(models, &cors);
    let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
    runtime
        .block_on(lacuna_service::serve(app, addr))
        .with_context(|| format!("serving on {addr}"))?;
    Ok(())
}
