//! Reading configs, chromosomes and models from disk.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use promptsteer_core::{AttributeSchema, Chromosome};
use promptsteer_service::{SchemaChoice, SessionConfig};
use serde::de::DeserializeOwned;

fn is_toml(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "toml")
}

/// TOML when the extension says so, JSON otherwise.
pub fn read_document<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if is_toml(path) {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    } else {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Session config; a `schema` naming a `.toml` file is loaded relative to
/// the config file.
pub fn load_config(path: &Path) -> Result<SessionConfig> {
    let mut cfg: SessionConfig = read_document(path)?;
    if let SchemaChoice::Named(name) = &cfg.schema {
        if name.ends_with(".toml") {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.schema = SchemaChoice::Inline(load_schema(&base.join(name))?);
        }
    }
    Ok(cfg)
}

pub fn load_schema(path: &Path) -> Result<AttributeSchema> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    AttributeSchema::from_toml(&text).with_context(|| format!("schema {}", path.display()))
}

pub fn load_chromosome(path: &Path, schema: &AttributeSchema) -> Result<Chromosome> {
    let c: Chromosome = read_document(path)?;
    let violations = c.validate(schema);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        bail!(
            "{} is not a valid chromosome: {}",
            path.display(),
            list.join("; ")
        );
    }
    Ok(c)
}
