//! `--config FILE` support: each key of the file becomes a `--key value` flag
//! placed before the command-line flags, so the command line wins.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use crate::args::SUBCOMMANDS;
use crate::error::CliError;

/// Flag tokens for one key. `None` values are dropped (false booleans).
type Flags = Vec<(String, Vec<String>)>;

pub fn expand(raw: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut tokens: Vec<OsString> = Vec::with_capacity(raw.len());
    let mut config: Option<PathBuf> = None;
    let mut it = raw.into_iter();
    while let Some(t) = it.next() {
        let s = t.to_string_lossy();
        if s == "--config" {
            match it.next() {
                Some(v) => config = Some(PathBuf::from(v)),
                // let clap report the missing value
                None => tokens.push(t),
            }
        } else if let Some(v) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(v));
        } else {
            tokens.push(t);
        }
    }
    let Some(path) = config else {
        return Ok(tokens);
    };

    let (command, flags) = read_config(&path)?;
    let sub = subcommand_position(&tokens);
    let command = match (sub, command) {
        (Some(i), Some(c)) if tokens[i] != OsString::from(&c) => {
            return Err(CliError::Config {
                path,
                message: format!(
                    "file is for `{c}` but `{}` was requested",
                    tokens[i].to_string_lossy()
                ),
            })
        }
        (Some(_), _) => None,
        (None, Some(c)) => Some(c),
        (None, None) => {
            return Err(CliError::Config {
                path,
                message: "no subcommand given and the file has no `command` key".into(),
            })
        }
    };

    let mut global = Vec::new();
    let mut local = Vec::new();
    for (key, values) in flags {
        let target = if key == "threads" {
            &mut global
        } else {
            &mut local
        };
        target.push(OsString::from(format!("--{key}")));
        target.extend(values.into_iter().map(OsString::from));
    }

    let mut out = Vec::with_capacity(tokens.len() + global.len() + local.len() + 1);
    match (sub, command) {
        (Some(i), _) => {
            out.extend(tokens[..=i].iter().cloned());
            out.extend(global);
            out.extend(local);
            out.extend(tokens[i + 1..].iter().cloned());
        }
        (None, Some(c)) => {
            out.extend(tokens.iter().take(1).cloned());
            out.push(OsString::from(c));
            out.extend(global);
            out.extend(local);
            out.extend(tokens.iter().skip(1).cloned());
        }
        (None, None) => unreachable!(),
    }
    Ok(out)
}

fn subcommand_position(tokens: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < tokens.len() {
        let s = tokens[i].to_string_lossy();
        if s == "--threads" {
            i += 2;
            continue;
        }
        if SUBCOMMANDS.contains(&s.as_ref()) {
            return Some(i);
        }
        if !s.starts_with('-') {
            return None;
        }
        i += 1;
    }
    None
}

/// Reads a TOML run file, or a JSON manifest whose `config` object is used.
fn read_config(path: &Path) -> Result<(Option<String>, Flags), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |message: String| CliError::Config {
        path: path.to_path_buf(),
        message,
    };
    let is_json =
        path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
    let value: serde_json::Value = if is_json {
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        match v.get("config") {
            Some(c) => c.clone(),
            None => v,
        }
    } else {
        let t: toml::Table = toml::from_str(&text).map_err(|e| bad(e.to_string()))?;
        serde_json::to_value(t).map_err(|e| bad(e.to_string()))?
    };
    let serde_json::Value::Object(map) = value else {
        return Err(bad("expected a table of settings".into()));
    };

    let mut command = None;
    let mut flags = Vec::new();
    for (key, v) in map {
        if key == "command" {
            match v {
                serde_json::Value::String(s) => command = Some(s),
                other => return Err(bad(format!("`command` must be a string, got {other}"))),
            }
            continue;
        }
        let key = key.replace('_', "-");
        let values = match v {
            serde_json::Value::Bool(true) => Vec::new(),
            serde_json::Value::Bool(false) | serde_json::Value::Null => continue,
            serde_json::Value::Array(items) => items
                .into_iter()
                .map(|x| {
                    scalar(&x).ok_or_else(|| bad(format!("`{key}`: unsupported array element {x}")))
                })
                .collect::<Result<_, _>>()?,
            other => {
                vec![scalar(&other)
                    .ok_or_else(|| bad(format!("`{key}`: unsupported value {other}")))?]
            }
        };
        flags.push((key, values));
    }
    Ok((command, flags))
}

fn scalar(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    fn strs(v: &[OsString]) -> Vec<String> {
        v.iter().map(|s| s.to_string_lossy().into_owned()).collect()
    }

    #[test]
    fn no_config_passes_through() {
        let raw = os(&["lendsim", "simulate", "--k", "0.2"]);
        assert_eq!(expand(raw.clone()).unwrap(), raw);
    }

    #[test]
    fn file_values_come_before_command_line_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(
            &p,
            "command = \"recommend\"\nalpha = [0.2, 0.5]\nk = 0.1\nper-group-beta = true\nthreads = 2\nfoo_bar = false\n",
        )
        .unwrap();
        let raw = os(&["lendsim", "--config", p.to_str().unwrap(), "--k", "0.3"]);
        let out = strs(&expand(raw).unwrap());
        assert_eq!(
            out,
            [
                "lendsim",
                "recommend",
                "--threads",
                "2",
                "--alpha",
                "0.2",
                "0.5",
                "--k",
                "0.1",
                "--per-group-beta",
                "--k",
                "0.3"
            ]
        );
    }

    #[test]
    fn mismatched_command_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "command = \"sample\"\n").unwrap();
        let raw = os(&["lendsim", "simulate", "--config", p.to_str().unwrap()]);
        assert!(matches!(expand(raw), Err(CliError::Config { .. })));
    }

    #[test]
    fn manifest_config_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.json");
        std::fs::write(
            &p,
            r#"{"command":"sample","config":{"command":"sample","a":2.0,"n":5}}"#,
        )
        .unwrap();
        let out = strs(&expand(os(&["lendsim", "--config", p.to_str().unwrap()])).unwrap());
        assert_eq!(out, ["lendsim", "sample", "--a", "2.0", "--n", "5"]);
    }
}
