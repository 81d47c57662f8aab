//! Run configuration files: loading, flag overrides, path resolution and
//! the `matrix` sweep section.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use reinpaint_core::pipeline::EvalConfig;
use reinpaint_core::Error;
use serde_json::{Map, Value};

/// Reads a TOML (`.toml`) or JSON (anything else) config file as a JSON
/// value.
pub fn load_value(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let value: Value = match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        _ => serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
    };
    if !value.is_object() {
        return Err(Error::Config(format!("{}: top level must be a table", path.display())).into());
    }
    Ok(value)
}

/// Makes the path-valued keys of a config absolute, relative to `base`.
pub fn resolve_paths(value: &mut Value, base: &Path) {
    let fix = |v: &mut Value| {
        if let Some(s) = v.as_str() {
            let p = Path::new(s);
            if p.is_relative() {
                *v = Value::String(base.join(p).to_string_lossy().into_owned());
            }
        }
    };
    if let Some(v) = value.get_mut("corpus") {
        fix(v);
    }
    if let Some(list) = value.get_mut("precomputed").and_then(Value::as_array_mut) {
        for item in list {
            if let Some(v) = item.get_mut("dir") {
                fix(v);
            }
        }
    }
    if let Some(v) = value.pointer_mut("/perceptual/model") {
        fix(v);
    }
}

/// Sets a dotted key such as `second_mask.ratio`, creating tables on the
/// way.
pub fn set_key(value: &mut Value, dotted: &str, new: Value) -> Result<()> {
    let mut cur = value;
    let parts: Vec<&str> = dotted.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            bail!(Error::Config(format!("bad key `{dotted}`")));
        }
        if !cur.is_object() {
            if cur.is_null() {
                *cur = Value::Object(Map::new());
            } else {
                bail!(Error::Config(format!("`{dotted}`: `{part}` is inside a non-table")));
            }
        }
        let obj = cur.as_object_mut().expect("checked above");
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), new);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("split yields at least one part")
}

/// One expanded run of a sweep.
#[derive(Debug, Clone)]
pub struct MatrixRun {
    pub name: String,
    pub overrides: Map<String, Value>,
    pub config: Value,
}

/// Removes the `matrix` section and expands it into the cartesian product
/// of its value lists, in key order. Without a matrix there is a single
/// unnamed run.
pub fn expand_matrix(mut value: Value) -> Result<Vec<MatrixRun>> {
    let matrix = value.as_object_mut().and_then(|o| o.remove("matrix"));
    let Some(matrix) = matrix else {
        return Ok(vec![MatrixRun {
            name: String::new(),
            overrides: Map::new(),
            config: value,
        }]);
    };
    let Value::Object(axes) = matrix else {
        bail!(Error::Config("`matrix` must be a table of lists".into()));
    };
    let mut combos: Vec<Map<String, Value>> = vec![Map::new()];
    for (key, values) in &axes {
        let Some(values) = values.as_array().filter(|v| !v.is_empty()) else {
            bail!(Error::Config(format!("matrix key `{key}` needs a non-empty list")));
        };
        combos = combos
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.insert(key.clone(), v.clone());
                    c
                })
            })
            .collect();
    }
    combos
        .into_iter()
        .enumerate()
        .map(|(i, overrides)| {
            let mut config = value.clone();
            for (k, v) in &overrides {
                set_key(&mut config, k, v.clone())?;
            }
            Ok(MatrixRun {
                name: format!("run_{i:03}"),
                overrides,
                config,
            })
        })
        .collect()
}

pub fn parse_config(value: &Value) -> Result<EvalConfig> {
    let cfg: EvalConfig =
        serde_json::from_value(value.clone()).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}
