use anyhow::{bail, Context, Result};
use serde_json::{Map, Value};

/// Applies `--a.b.c=value` overrides to a JSON config. Values are parsed as
/// JSON when possible and taken as strings otherwise.
pub fn apply(config: &mut Value, overrides: &[String]) -> Result<()> {
    for raw in overrides {
        let body = raw
            .strip_prefix("--")
            .with_context(|| format!("override {raw:?} must look like --key=value"))?;
        let (key, value) = body
            .split_once('=')
            .with_context(|| format!("override {raw:?} must look like --key=value"))?;
        if key.is_empty() || key.split('.').any(str::is_empty) {
            bail!("override {raw:?} has an empty key segment");
        }
        let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
        set_path(config, key, value)?;
    }
    Ok(())
}

fn set_path(config: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = config;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !node.is_object() {
            if node.is_null() {
                *node = Value::Object(Map::new());
            } else {
                bail!("cannot set {key:?}: {:?} is not an object", parts[..i].join("."));
            }
        }
        let map = node.as_object_mut().expect("checked above");
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("keys have at least one segment")
}
