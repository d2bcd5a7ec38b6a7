//! Config loading: base preset, then the config file, then `--set` overrides.

use std::path::Path;

use bandit_clusters::RunConfig;
use serde_json::{Map, Value};

use crate::Failure;

/// Recursively overlays `top` onto `base`. Objects merge key by key;
/// anything else replaces.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

/// Reads a TOML config, or a JSON file. A JSON aggregate report is accepted
/// too: its embedded `config` object is used.
fn read_file(path: &Path) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let value: Value = if is_json {
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
    };
    match value {
        Value::Object(mut map) if is_json && map.contains_key("config") => Ok(map.remove("config").unwrap_or_default()),
        Value::Object(_) => Ok(value),
        _ => Err(Failure::Config(format!("{}: expected a table at the top level", path.display()))),
    }
}

/// Parses the right-hand side of `--set` as a TOML value, falling back to a
/// bare string so `env.source=features` works without quotes.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<Map<String, Value>>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut m| m.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Applies one `key.path=value` override. Every key must already exist in
/// the fully serialized config, so typos fail here with the full path.
pub fn apply_set(root: &mut Value, assignment: &str) -> Result<(), Failure> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Failure::Config(format!("--set expects key=value, got `{assignment}`")))?;
    let key = key.trim();
    let mut slot = root;
    for part in key.split('.') {
        slot = slot
            .as_object_mut()
            .and_then(|m| m.get_mut(part))
            .ok_or_else(|| Failure::Config(format!("unknown config key `{key}`")))?;
    }
    *slot = parse_value(raw.trim());
    Ok(())
}

/// Builds the resolved config from a base preset, an optional file and the
/// overrides, in that order.
pub fn resolve(base: &RunConfig, file: Option<&Path>, sets: &[String]) -> Result<RunConfig, Failure> {
    let mut value = serde_json::to_value(base).map_err(|e| Failure::Runtime(e.to_string()))?;
    if let Some(path) = file {
        merge(&mut value, read_file(path)?);
    }
    for s in sets {
        apply_set(&mut value, s)?;
    }
    let cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let origin = file.map(|p| format!("{}: ", p.display())).unwrap_or_default();
        Failure::Config(format!("{origin}key `{}`: {}", e.path(), e.inner()))
    })?;
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}
