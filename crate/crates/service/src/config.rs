//! Session configuration as accepted by `POST /sessions`.

use std::collections::BTreeMap;

use promptsteer_core::{AttributeSchema, EvolutionParams};
use promptsteer_render::{ImageBackend, ProceduralBackend, RemoteBackend, RemoteConfig};
use serde::{Deserialize, Serialize};

use crate::ServiceError;

pub const DEFAULT_SIZE: u32 = 512;

/// A built-in schema by name, or a full schema document inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemaChoice {
    Named(String),
    Inline(AttributeSchema),
}

impl Default for SchemaChoice {
    fn default() -> Self {
        SchemaChoice::Named("kandinsky".into())
    }
}

impl SchemaChoice {
    pub fn resolve(&self) -> Result<AttributeSchema, ServiceError> {
        match self {
            SchemaChoice::Named(name) if name == "kandinsky" => Ok(AttributeSchema::kandinsky()),
            SchemaChoice::Named(name) => Err(ServiceError::Validation(format!(
                "unknown schema `{name}`; pass `kandinsky` or an inline schema"
            ))),
            SchemaChoice::Inline(schema) => Ok(schema.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendChoice {
    #[default]
    Procedural,
    Remote(RemoteConfig),
}

impl BackendChoice {
    pub fn build(&self) -> Box<dyn ImageBackend> {
        match self {
            BackendChoice::Procedural => Box::new(ProceduralBackend),
            BackendChoice::Remote(cfg) => Box::new(RemoteBackend::new(cfg.clone())),
        }
    }
}

fn default_population() -> usize {
    EvolutionParams::default().population
}

fn default_rate() -> f64 {
    EvolutionParams::default().mutation_rate
}

fn default_size() -> u32 {
    DEFAULT_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    #[serde(default)]
    pub schema: SchemaChoice,
    #[serde(default = "default_population")]
    pub population: usize,
    #[serde(default = "default_rate")]
    pub mutation_rate: f64,
    #[serde(default)]
    pub backend: BackendChoice,
    /// Passed through to the backend with every request (steps, cfg_scale).
    #[serde(default)]
    pub backend_params: BTreeMap<String, serde_json::Value>,
    #[serde(default = "default_size")]
    pub width: u32,
    #[serde(default = "default_size")]
    pub height: u32,
    /// Fixes every random draw of the session. Drawn from the OS when absent.
    #[serde(default)]
    pub master_seed: Option<u64>,
    /// Caller-chosen id; a random one is generated when absent.
    #[serde(default)]
    pub session_id: Option<String>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            schema: SchemaChoice::default(),
            population: default_population(),
            mutation_rate: default_rate(),
            backend: BackendChoice::default(),
            backend_params: BTreeMap::new(),
            width: DEFAULT_SIZE,
            height: DEFAULT_SIZE,
            master_seed: None,
            session_id: None,
        }
    }
}

impl SessionConfig {
    pub fn params(&self) -> EvolutionParams {
        EvolutionParams {
            population: self.population,
            mutation_rate: self.mutation_rate,
            rerender_survivors: matches!(self.backend, BackendChoice::Remote(_)),
        }
    }

    pub fn validate(&self) -> Result<AttributeSchema, ServiceError> {
        self.params()
            .validate()
            .map_err(|e| ServiceError::Validation(e.to_string()))?;
        if self.width < 64 || self.height < 64 || self.width > 2048 || self.height > 2048 {
            return Err(ServiceError::Validation(format!(
                "canvas {}x{} outside 64..=2048",
                self.width, self.height
            )));
        }
        self.schema.resolve()
    }
}

/// What the session log header keeps beyond schema, params and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct StoredSettings {
    pub backend: BackendChoice,
    pub backend_params: BTreeMap<String, serde_json::Value>,
    pub width: u32,
    pub height: u32,
}

impl StoredSettings {
    pub fn to_map(&self) -> BTreeMap<String, serde_json::Value> {
        match serde_json::to_value(self).expect("settings serialize") {
            serde_json::Value::Object(m) => m.into_iter().collect(),
            _ => unreachable!("settings are an object"),
        }
    }

    pub fn from_map(map: &BTreeMap<String, serde_json::Value>) -> Result<Self, ServiceError> {
        let obj: serde_json::Map<_, _> = map.clone().into_iter().collect();
        serde_json::from_value(serde_json::Value::Object(obj))
            .map_err(|e| ServiceError::Storage(format!("session settings: {e}")))
    }
}
