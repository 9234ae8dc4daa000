//! Flat `key = value` configuration files.
//!
//! Keys are long flag names without the leading dashes (`tau`, `max-iter`;
//! underscores are accepted). Values from the file are spliced into the
//! argument list after the subcommand unless the same flag is already given,
//! so command-line flags always win. A value of `true` enables a switch and
//! `false` leaves it off.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected key = value, got {raw:?}", i + 1);
        };
        let key = key.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            bail!("config line {}: invalid key {key:?}", i + 1);
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

/// Expands `--config <path>` in `args` (program name first, subcommand
/// second) into explicit flags.
pub fn expand_args(args: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = args
        .iter()
        .position(|a| a == "--config" || a.starts_with("--config="))
    else {
        return Ok(args);
    };
    let (path, consumed) = match args[pos].strip_prefix("--config=") {
        Some(p) => (p.to_string(), 1),
        None => match args.get(pos + 1) {
            Some(p) => (p.clone(), 2),
            None => bail!("--config needs a file path"),
        },
    };
    let text = fs::read_to_string(Path::new(&path))
        .with_context(|| format!("cannot read config {path}"))?;
    let mut rest: Vec<String> = args[..pos]
        .iter()
        .chain(&args[pos + consumed..])
        .cloned()
        .collect();
    let given = |key: &str, rest: &[String]| {
        let flag = format!("--{key}");
        rest.iter()
            .any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
    };
    let mut extra = Vec::new();
    for (key, value) in parse(&text)? {
        if given(&key, &rest) {
            continue;
        }
        match value.as_str() {
            "true" => extra.push(format!("--{key}")),
            "false" => {}
            _ => extra.push(format!("--{key}={value}")),
        }
    }
    let at = rest.len().min(2);
    rest.splice(at..at, extra);
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn parses_flat_pairs() {
        let kv = parse("# run\ntau = 0.9\nmax_iter=200  # cap\n\n").unwrap();
        assert_eq!(
            kv,
            vec![
                ("tau".into(), "0.9".into()),
                ("max-iter".into(), "200".into())
            ]
        );
        assert!(parse("tau 0.9").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.conf");
        fs::write(&p, "tau = 0.9\nlambda = 2\nno-timing = true\n").unwrap();
        let out = expand_args(s(&[
            "qknn",
            "fit",
            "--lambda",
            "0.5",
            "--config",
            p.to_str().unwrap(),
        ]))
        .unwrap();
        assert_eq!(
            out,
            s(&["qknn", "fit", "--tau=0.9", "--no-timing", "--lambda", "0.5"])
        );
    }

    #[test]
    fn missing_file_is_an_error() {
        assert!(expand_args(s(&["qknn", "fit", "--config", "/nonexistent/x.conf"])).is_err());
        assert!(expand_args(s(&["qknn", "fit", "--config"])).is_err());
    }
}
