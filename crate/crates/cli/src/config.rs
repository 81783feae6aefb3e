//! `key=value` config files. Keys are long flag names without the dashes.
//! Values fill in flags missing from the command line; flags given there win.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Command;

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected `key=value`", i + 1);
        };
        let k = k.trim().trim_start_matches("--");
        if k.is_empty() {
            bail!("line {}: empty key", i + 1);
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Value of `--config` in `args`, if present.
pub fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

/// Appends config entries accepted by the selected subcommand and absent from `args`.
pub fn merge(root: &Command, args: Vec<OsString>, path: &Path) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    let entries = parse(&text).with_context(|| path.display().to_string())?;

    let words: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let mut cmd = root;
    for w in &words {
        if w.starts_with('-') {
            continue;
        }
        match cmd.find_subcommand(w) {
            Some(sub) => cmd = sub,
            None => break,
        }
    }
    let given = |key: &str| {
        let flag = format!("--{key}");
        words.iter().any(|w| *w == flag || w.starts_with(&format!("{flag}=")))
    };

    let mut args = args;
    for (key, value) in entries {
        let Some(arg) = cmd.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else {
            continue;
        };
        if given(&key) {
            continue;
        }
        if arg.get_action().takes_values() {
            args.push(format!("--{key}").into());
            args.push(value.into());
        } else {
            match value.as_str() {
                "true" | "1" | "yes" => args.push(format!("--{key}").into()),
                "false" | "0" | "no" => {}
                _ => bail!("{}: `{key}` is a switch; use true or false", path.display()),
            }
        }
    }
    Ok(args)
}
