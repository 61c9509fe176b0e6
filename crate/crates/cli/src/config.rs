//! Layered settings: defaults, then a JSON config file, then flags.

use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
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

/// Flag overrides collected as a nested JSON object.
#[derive(Debug, Default)]
pub struct Overrides(Value);

impl Overrides {
    pub fn new() -> Self {
        Overrides(Value::Object(Map::new()))
    }

    /// Sets `path` when `value` is present.
    pub fn set<V: Serialize>(&mut self, path: &[&str], value: Option<V>) -> &mut Self {
        let Some(value) = value else {
            return self;
        };
        let mut node = &mut self.0;
        for key in &path[..path.len() - 1] {
            node = node
                .as_object_mut()
                .expect("object")
                .entry(key.to_string())
                .or_insert_with(|| Value::Object(Map::new()));
        }
        node.as_object_mut().expect("object").insert(
            path[path.len() - 1].to_string(),
            serde_json::to_value(value).expect("serializable"),
        );
        self
    }
}

pub fn resolve<T: Serialize + DeserializeOwned>(
    defaults: &T,
    file: Option<&Path>,
    flags: Overrides,
) -> Result<T> {
    let mut value = serde_json::to_value(defaults)?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let parsed: Value = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        if !parsed.is_object() {
            anyhow::bail!("config {} must be a JSON object", path.display());
        }
        merge(&mut value, parsed);
    }
    merge(&mut value, flags.0);
    serde_json::from_value(value).context("invalid configuration")
}
