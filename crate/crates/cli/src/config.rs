//! `--config FILE` support: `key=value` lines become flags unless the same
//! flag was given on the command line.

use std::ffi::OsString;
use std::fs;

use anyhow::{bail, Context};

/// Flags from the config file as `--key=value` strings; `true`/`false`
/// values switch boolean flags on or leave them off, and a repeated key
/// yields a repeated flag.
pub fn parse_config(text: &str) -> anyhow::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected key=value, got {line:?}", i + 1);
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            bail!("config line {}: empty key", i + 1);
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

fn flag_given(args: &[OsString], key: &str) -> bool {
    let flag = format!("--{key}");
    let with_value = format!("--{key}=");
    args.iter().any(|a| {
        a.to_str()
            .is_some_and(|a| a == flag || a.starts_with(&with_value))
    })
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut iter = args.iter();
    while let Some(a) = iter.next() {
        match a.to_str() {
            Some("--config") => return iter.next().cloned(),
            Some(s) if s.starts_with("--config=") => return Some(s["--config=".len()..].into()),
            _ => {}
        }
    }
    None
}

/// Appends the config file's flags to `args`.
pub fn expand_args(mut args: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading config file {}", path.to_string_lossy()))?;
    let mut extra = Vec::new();
    for (key, value) in parse_config(&text)? {
        if key == "config" || flag_given(&args, &key) {
            continue;
        }
        match value.as_str() {
            "true" => extra.push(format!("--{key}").into()),
            "false" => {}
            _ => extra.push(format!("--{key}={value}").into()),
        }
    }
    args.extend(extra);
    Ok(args)
}
