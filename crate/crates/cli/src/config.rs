//! `--config FILE` support: a flat JSON object whose keys are long flag names.
//! Entries only fill flags that are absent from the command line.

use std::path::Path;

use serde_json::Value;

/// Why the config could not be merged.
#[derive(Debug)]
pub enum ConfigError {
    Read(String),
    Usage(String),
}

fn extract_config_path(args: &mut Vec<String>) -> Result<Option<String>, ConfigError> {
    let Some(pos) = args
        .iter()
        .position(|a| a == "--config" || a.starts_with("--config="))
    else {
        return Ok(None);
    };
    let arg = args.remove(pos);
    if let Some(path) = arg.strip_prefix("--config=") {
        return Ok(Some(path.to_string()));
    }
    if pos < args.len() {
        Ok(Some(args.remove(pos)))
    } else {
        Err(ConfigError::Usage("--config requires a file path".into()))
    }
}

fn has_flag(args: &[String], flag: &str) -> bool {
    args.iter().any(|a| {
        a == flag
            || a.strip_prefix(flag)
                .is_some_and(|rest| rest.starts_with('='))
    })
}

/// Appends config entries to `args` for every flag not already given.
pub fn merge(mut args: Vec<String>) -> Result<Vec<String>, ConfigError> {
    let Some(path) = extract_config_path(&mut args)? else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| ConfigError::Read(format!("{path}: {e}")))?;
    let json: Value = serde_json::from_str(&text)
        .map_err(|e| ConfigError::Usage(format!("config {path}: {e}")))?;
    let Value::Object(entries) = json else {
        return Err(ConfigError::Usage(format!(
            "config {path}: expected a JSON object"
        )));
    };
    for (key, value) in entries {
        let flag = format!("--{}", key.replace('_', "-"));
        if has_flag(&args, &flag) {
            continue;
        }
        let values = match value {
            Value::Array(items) => items,
            other => vec![other],
        };
        for v in values {
            match v {
                Value::Bool(true) => args.push(flag.clone()),
                Value::Bool(false) | Value::Null => {}
                Value::String(s) => {
                    args.push(flag.clone());
                    args.push(s);
                }
                Value::Number(n) => {
                    args.push(flag.clone());
                    args.push(n.to_string());
                }
                _ => {
                    return Err(ConfigError::Usage(format!(
                        "config key {key:?}: unsupported value"
                    )))
                }
            }
        }
    }
    Ok(args)
}
