//! Resolution of the campaign config: defaults, then the JSON file, then
//! `--set` overrides, then dedicated flags, then the seed environment variable
//! if nothing else set a seed.

use std::path::Path;

use serde_json::{Map, Value};
use shapeguard::campaign::CampaignConfig;
use shapeguard::{Error, Result};

pub fn read_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if !value.is_object() {
        return Err(Error::Config(format!("{}: top level must be a JSON object", path.display())));
    }
    Ok(value)
}

/// Recursive merge; objects carrying a `kind` tag are replaced whole.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) if !o.contains_key("kind") => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let (last, init) = parts.split_last().expect("split yields one part");
    for part in init {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override {key}: {part} is inside a non-object")))?;
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    node.as_object_mut()
        .ok_or_else(|| Error::Config(format!("override {key}: parent is not an object")))?
        .insert(last.to_string(), value);
    Ok(())
}

/// `key=value`; the value is JSON when it parses, a string otherwise.
pub fn parse_set(arg: &str) -> Result<(String, Value)> {
    let (key, raw) = arg
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {arg:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

pub fn resolve(
    file: Option<Value>,
    sets: &[String],
    flags: Vec<(&str, Value)>,
    env_seed: Option<&str>,
) -> Result<CampaignConfig> {
    let mut value = serde_json::to_value(CampaignConfig::default())?;
    if let Some(f) = file {
        merge(&mut value, f);
    }
    for s in sets {
        let (k, v) = parse_set(s)?;
        set_path(&mut value, &k, v)?;
    }
    for (k, v) in flags {
        set_path(&mut value, k, v)?;
    }
    if value["seed"].is_null() {
        if let Some(raw) = env_seed {
            let seed: u64 = raw
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{}={raw:?} is not an unsigned integer", shapeguard::campaign::SEED_ENV)))?;
            value["seed"] = Value::from(seed);
        }
    }
    let config: CampaignConfig =
        serde_json::from_value(value).map_err(|e| Error::Config(format!("config: {e}")))?;
    config.validate()?;
    Ok(config)
}
