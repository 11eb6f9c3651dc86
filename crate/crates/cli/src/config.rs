//! JSON run manifests expanded into command-line tokens.

use std::ffi::OsString;
use std::path::Path;

use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Read a config object and turn each entry into `--key value` tokens.
///
/// Arrays become comma-separated values, `true` becomes a bare switch and
/// `false` or `null` are dropped.
pub fn config_tokens(path: &Path) -> CliResult<Vec<(String, Vec<OsString>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
    let Value::Object(map) = value else {
        return Err(CliError::usage(format!("config {} must be a JSON object", path.display())));
    };
    let mut tokens = Vec::new();
    for (key, v) in map {
        if key == "config" {
            return Err(CliError::usage("config files cannot nest --config"));
        }
        let flag = OsString::from(format!("--{key}"));
        let entry = match v {
            Value::Null | Value::Bool(false) => continue,
            Value::Bool(true) => vec![flag],
            Value::Array(items) => {
                let parts = items.iter().map(scalar).collect::<CliResult<Vec<_>>>()?;
                vec![flag, parts.join(",").into()]
            }
            other => vec![flag, scalar(&other)?.into()],
        };
        tokens.push((key, entry));
    }
    Ok(tokens)
}

fn scalar(v: &Value) -> CliResult<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        _ => Err(CliError::usage(format!("unsupported config value {v}"))),
    }
}

/// Flags that replace one another: giving any of them on the command line
/// drops the others from the config.
const EXCLUSIVE: [&[&str]; 2] = [
    &["strikes", "logstrikes", "yrange"],
    &["xi0", "curve-file", "alpha0"],
];

/// Insert config tokens right after the subcommand, skipping every key that
/// also appears on the command line.
pub fn splice(args: &[OsString], subcommand: &str, tokens: Vec<(String, Vec<OsString>)>) -> Vec<OsString> {
    let on_line = |key: &str| {
        let flag = format!("--{key}");
        let prefix = format!("--{key}=");
        args.iter()
            .filter_map(|a| a.to_str())
            .any(|a| a == flag || a.starts_with(&prefix))
    };
    let given = |key: &str| {
        on_line(key)
            || EXCLUSIVE
                .iter()
                .filter(|group| group.contains(&key))
                .any(|group| group.iter().any(|k| on_line(k)))
    };
    let pos = args
        .iter()
        .position(|a| a == subcommand)
        .map(|p| p + 1)
        .unwrap_or(args.len());
    let mut out = args[..pos].to_vec();
    for (key, entry) in tokens {
        if !given(&key) {
            out.extend(entry);
        }
    }
    out.extend_from_slice(&args[pos..]);
    out
}
