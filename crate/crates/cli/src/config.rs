//! Pipeline configuration as a flat map of dotted keys.
//!
//! Defaults, the `--config` file, `--set` pairs and named flags are layers of
//! `key -> value` overrides applied in that order, so later layers win.

use std::collections::BTreeMap;
use std::path::Path;

use fsdc::{EpisodeSpec, PipelineConfig};
use serde_json::{Map, Value};

use crate::CliError;

const EPISODE: &str = "episode";

pub type Layer = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub episode: EpisodeSpec,
}

fn flatten_into(prefix: &str, v: &Value, out: &mut Layer) {
    match v {
        Value::Object(m) if !m.is_empty() => {
            for (k, child) in m {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten_into(&key, child, out);
            }
        }
        leaf => {
            out.insert(prefix.to_string(), leaf.clone());
        }
    }
}

pub fn flatten(v: &Value) -> Layer {
    let mut out = Layer::new();
    flatten_into("", v, &mut out);
    out
}

fn unflatten(flat: &Layer) -> Value {
    let mut root = Map::new();
    for (key, v) in flat {
        let mut node = &mut root;
        let mut parts = key.split('.').peekable();
        while let Some(part) = parts.next() {
            if parts.peek().is_none() {
                node.insert(part.to_string(), v.clone());
            } else {
                node = node
                    .entry(part)
                    .or_insert_with(|| Value::Object(Map::new()))
                    .as_object_mut()
                    .expect("keys come from a flattened object");
            }
        }
    }
    Value::Object(root)
}

impl RunConfig {
    pub fn to_flat(&self) -> Layer {
        let mut v = serde_json::to_value(self.pipeline).expect("config serializes");
        v[EPISODE] = serde_json::to_value(self.episode).expect("episode spec serializes");
        flatten(&v)
    }

    fn from_flat(flat: &Layer) -> Result<Self, CliError> {
        let mut v = unflatten(flat);
        let episode = v.as_object_mut().and_then(|m| m.remove(EPISODE)).unwrap_or(Value::Null);
        let bad = |e: serde_json::Error| CliError::Config(e.to_string());
        Ok(RunConfig {
            pipeline: serde_json::from_value(v).map_err(bad)?,
            episode: serde_json::from_value(episode).map_err(bad)?,
        })
    }

    /// Applies `layers` on top of the defaults, rejecting unknown keys.
    pub fn merged(layers: &[Layer]) -> Result<Self, CliError> {
        let mut flat = RunConfig::default().to_flat();
        for layer in layers {
            for (k, v) in layer {
                match flat.get_mut(k) {
                    Some(slot) => *slot = v.clone(),
                    None => return Err(CliError::Config(format!("unknown config key '{k}'"))),
                }
            }
        }
        RunConfig::from_flat(&flat)
    }
}

/// Later layers win key by key.
pub fn combine(a: &Layer, b: &Layer) -> Layer {
    let mut out = a.clone();
    out.extend(b.iter().map(|(k, v)| (k.clone(), v.clone())));
    out
}

pub fn load_layer(path: &Path) -> Result<Layer, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Core(e.into()))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if !v.is_object() {
        return Err(CliError::Config(format!("{}: expected a JSON object", path.display())));
    }
    Ok(flatten(&v))
}

/// Parses `key=value`; the value is read as JSON, falling back to a string.
pub fn parse_assignment(s: &str) -> Result<(String, Value), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("expected KEY=VALUE, got '{s}'")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}
