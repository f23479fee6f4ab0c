//! `--config` files: `key = value` lines mirroring the long flags, e.g.
//!
//! ```text
//! # training run
//! case = fixtures/case68.case
//! epochs = 500
//! exact = true
//! ```
//!
//! Entries are spliced in right after the subcommand, except for flags that
//! also appear on the command line, which win.

use std::ffi::OsString;
use std::path::Path;

use ssa_core::{Error, Result};

const SUBCOMMANDS: [&str; 8] = [
    "generate",
    "train",
    "assess",
    "evaluate",
    "sweep-k",
    "missing-data",
    "placement",
    "bench",
];

/// Parses a config file body into `(flag, tokens)` entries.
pub fn config_entries(text: &str, name: &str) -> Result<Vec<(String, Vec<OsString>)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Usage(format!("{name}:{}: expected `key = value`", i + 1)));
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            return Err(Error::Usage(format!("{name}:{}: invalid key `{key}`", i + 1)));
        }
        let flag = format!("--{key}");
        let tokens = match value {
            "true" => vec![flag.clone().into()],
            "false" => vec![],
            _ => vec![flag.clone().into(), value.into()],
        };
        out.push((flag, tokens));
    }
    Ok(out)
}

/// Replaces `--config <file>` with the file's flags.
pub fn expand_args(mut args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.to_string_lossy().starts_with("--config=")) else {
        return Ok(args);
    };
    let flag = args.remove(pos).to_string_lossy().into_owned();
    let path: OsString = match flag.strip_prefix("--config=") {
        Some(p) => p.into(),
        None if pos < args.len() => args.remove(pos),
        None => return Err(Error::Usage("--config needs a file".into())),
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let given = |flag: &str| {
        args.iter().any(|a| {
            let a = a.to_string_lossy();
            a == flag || a.strip_prefix(flag).is_some_and(|rest| rest.starts_with('='))
        })
    };
    let tokens: Vec<OsString> = config_entries(&text, &path.display().to_string())?
        .into_iter()
        .filter(|(flag, _)| !given(flag))
        .flat_map(|(_, t)| t)
        .collect();
    let at = args
        .iter()
        .position(|a| SUBCOMMANDS.iter().any(|s| a == s))
        .map_or(args.len(), |i| i + 1);
    args.splice(at..at, tokens);
    Ok(args)
}
