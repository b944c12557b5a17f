//! `--config FILE` support: a JSON object whose keys are flag names.
//!
//! Values from the file are appended to the argument list for every flag the
//! user did not pass, so explicit flags always win and the file goes through
//! exactly the same parsing and validation as the command line.

use std::ffi::OsString;
use std::fs;

use anyhow::{bail, Context, Result};
use serde_json::Value;

/// Subcommands whose `--config` names a service config instead.
const OWN_CONFIG: &[&str] = &["serve"];

fn flag_value(args: &[OsString], name: &str) -> Option<String> {
    let long = format!("--{name}");
    let prefix = format!("--{name}=");
    let mut iter = args.iter();
    while let Some(a) = iter.next() {
        let a = a.to_string_lossy();
        if a == long {
            return iter.next().map(|v| v.to_string_lossy().into_owned());
        }
        if let Some(v) = a.strip_prefix(&prefix) {
            return Some(v.to_owned());
        }
    }
    None
}

fn has_flag(args: &[OsString], name: &str) -> bool {
    let long = format!("--{name}");
    let prefix = format!("--{name}=");
    args.iter().any(|a| {
        let a = a.to_string_lossy();
        a == long || a.starts_with(&prefix)
    })
}

fn render(key: &str, value: &Value) -> Result<Option<String>> {
    Ok(Some(match value {
        Value::Null => return Ok(None),
        Value::Bool(true) => "on".into(),
        Value::Bool(false) => "off".into(),
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        Value::Array(items) => items
            .iter()
            .map(|v| match v {
                Value::Number(n) => Ok(n.to_string()),
                Value::String(s) => Ok(s.clone()),
                _ => bail!("config key `{key}`: list items must be numbers or strings"),
            })
            .collect::<Result<Vec<_>>>()?
            .join(","),
        Value::Object(_) => bail!("config key `{key}`: nested objects are not flag values"),
    }))
}

/// Returns `args` with values from the subcommand's `--config` file merged in.
pub fn merge_config_file(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(sub) = args.get(1).map(|s| s.to_string_lossy().into_owned()) else {
        return Ok(args);
    };
    if OWN_CONFIG.contains(&sub.as_str()) {
        return Ok(args);
    }
    let Some(path) = flag_value(&args, "config") else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config file {path}"))?;
    let json: Value = serde_json::from_str(&text).with_context(|| format!("parsing config file {path}"))?;
    let Value::Object(map) = json else {
        bail!("config file {path} must hold a JSON object");
    };
    let mut merged = args;
    for (key, value) in &map {
        if key == "config" || has_flag(&merged, key) {
            continue;
        }
        if let Some(v) = render(key, value)? {
            merged.push(format!("--{key}").into());
            merged.push(v.into());
        }
    }
    Ok(merged)
}
