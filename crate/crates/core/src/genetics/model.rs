//! The Optimized Prompting Model: a frozen learned preference that samples
//! prompts with no further feedback.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::operators::{sample_normal, weighted_values};
use super::state::{ContinuousModels, EvolutionState, WeightTable};
use super::GeneticsError;
use crate::chromosome::{Chromosome, SEED_BOUND};
use crate::guideline::AttributeSchema;

pub const MODEL_FORMAT: &str = "promptsteer-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub session_id: String,
    pub iterations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedPromptingModel {
    format: String,
    version: u32,
    schema_fingerprint: String,
    provenance: Provenance,
    weights: WeightTable,
    continuous: ContinuousModels,
    schema: AttributeSchema,
}

impl OptimizedPromptingModel {
    /// Freezes `state`. Fails before the first completed iteration.
    pub fn export(
        state: &EvolutionState,
        schema: &AttributeSchema,
        session_id: impl Into<String>,
    ) -> Result<Self, GeneticsError> {
        if state.iterations() == 0 {
            return Err(GeneticsError::NoIterations);
        }
        let model = OptimizedPromptingModel {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            schema_fingerprint: schema.fingerprint(),
            provenance: Provenance {
                session_id: session_id.into(),
                iterations: state.iterations(),
            },
            weights: state.weights.clone(),
            continuous: state.continuous_models.clone(),
            schema: schema.clone(),
        };
        model.check()?;
        Ok(model)
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn weights(&self) -> &WeightTable {
        &self.weights
    }

    pub fn continuous_models(&self) -> &ContinuousModels {
        &self.continuous
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn schema_fingerprint(&self) -> &str {
        &self.schema_fingerprint
    }

    /// Canonical TOML document. Byte-identical for equal models.
    pub fn to_document(&self) -> String {
        toml::to_string(self).expect("model serializes")
    }

    pub fn from_document(text: &str) -> Result<Self, GeneticsError> {
        let model: OptimizedPromptingModel =
            toml::from_str(text).map_err(|e| GeneticsError::ModelDocument(e.to_string()))?;
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<(), GeneticsError> {
        let bad = |m: String| Err(GeneticsError::ModelDocument(m));
        if self.format != MODEL_FORMAT {
            return bad(format!("unexpected format `{}`", self.format));
        }
        if self.version != MODEL_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        if self.schema_fingerprint != self.schema.fingerprint() {
            return bad("schema fingerprint mismatch".into());
        }
        let tokens: Vec<&str> = self.schema.value_tokens().collect();
        if self.weights.len() != tokens.len()
            || tokens.iter().any(|t| !self.weights.contains_key(*t))
        {
            return bad("weight table does not match schema values".into());
        }
        if let Some((v, w)) = self
            .weights
            .iter()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return bad(format!("weight for `{v}` must be positive, got {w}"));
        }
        let ids: Vec<&str> = self.schema.continuous().map(|a| a.id()).collect();
        if self.continuous.len() != ids.len()
            || ids.iter().any(|id| !self.continuous.contains_key(*id))
        {
            return bad("continuous models do not match schema attributes".into());
        }
        for (id, m) in &self.continuous {
            if !(m.mean.is_finite() && m.variance.is_finite() && m.variance > 0.0) {
                return bad(format!("degenerate normal model for `{id}`"));
            }
        }
        Ok(())
    }

    /// Fresh chromosome: discrete values weight-proportional without
    /// replacement, continuous genes from the frozen normals clamped to
    /// `[0, 1]`, uniform seed.
    pub fn sample_prompt<R: Rng + ?Sized>(&self, rng: &mut R) -> Chromosome {
        let mut discrete = BTreeMap::new();
        let mut continuous = BTreeMap::new();
        for attr in self.schema.attributes() {
            if attr.is_discrete() {
                discrete.insert(
                    attr.id().to_string(),
                    weighted_values(attr, &self.weights, rng),
                );
            } else {
                continuous.insert(
                    attr.id().to_string(),
                    sample_normal(&self.continuous[attr.id()], rng),
                );
            }
        }
        Chromosome {
            style: self.schema.style_token().to_string(),
            discrete,
            continuous,
            seed: rng.random_range(0..SEED_BOUND),
        }
    }
}
