//! Flat `key = value` configuration.
//!
//! One assignment per line; `#` starts a comment anywhere on a line. Later
//! layers override earlier ones in this order: experiment defaults, config
//! file, `SBMLAB_*` environment variables, command-line flags.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

pub type Settings = BTreeMap<String, String>;

/// Prefix of environment variables that override settings.
pub const ENV_PREFIX: &str = "SBMLAB_";

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

/// Parses config text. Duplicate keys and malformed lines are errors.
pub fn parse_config(text: &str) -> Result<Settings> {
    let mut out = Settings::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line: i + 1, message };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if !valid_key(key) {
            return Err(err(format!("invalid key `{key}`")));
        }
        if value.is_empty() {
            return Err(err(format!("empty value for `{key}`")));
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(err(format!("duplicate key `{key}`")));
        }
    }
    Ok(out)
}

pub fn load_config(path: &Path) -> Result<Settings> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Renders settings in the format [`parse_config`] reads, sorted by key.
pub fn render_config(settings: &Settings) -> String {
    settings.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// The environment variable that overrides `key`: `tol.zero` becomes
/// `SBMLAB_TOL_ZERO`.
pub fn env_name(key: &str) -> String {
    let mut name = String::from(ENV_PREFIX);
    name.extend(key.chars().map(|c| match c {
        '.' | '-' => '_',
        c => c.to_ascii_uppercase(),
    }));
    name
}

/// Settings for `keys` found among `vars`.
pub fn env_overrides<'a, I>(keys: impl IntoIterator<Item = &'a str>, vars: I) -> Settings
where
    I: IntoIterator<Item = (String, String)>,
{
    let vars: BTreeMap<String, String> = vars
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    keys.into_iter()
        .filter_map(|k| vars.get(&env_name(k)).map(|v| (k.to_string(), v.trim().to_string())))
        .collect()
}

pub fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|x| !x.is_nan())
        .ok_or_else(|| Error::config(format!("`{key}` must be a number, got `{value}`")))
}

pub fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value
        .replace('_', "")
        .parse::<u64>()
        .map_err(|_| Error::config(format!("`{key}` must be a non-negative integer, got `{value}`")))
}

pub fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(format!("`{key}` must be true or false, got `{value}`"))),
    }
}

/// Comma-separated numbers.
pub fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    let v = value
        .split(',')
        .map(|s| parse_f64(key, s.trim()))
        .collect::<Result<Vec<_>>>()?;
    if v.is_empty() {
        return Err(Error::config(format!("`{key}` must list at least one number")));
    }
    Ok(v)
}
