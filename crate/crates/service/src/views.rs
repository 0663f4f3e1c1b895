//! Request and response bodies of the HTTP API, version [`API_VERSION`].

use promptsteer_core::analytics::{HistogramScope, IterationStats, StreamSeries};
use promptsteer_core::genetics::Origin;
use promptsteer_core::{
    AttributeSchema, Ballot, Chromosome, ImageRef, Individual, OptimizedPromptingModel, TraceToken,
};
use serde::{Deserialize, Serialize};

pub const API_VERSION: u32 = 1;

pub fn image_url(r: &ImageRef) -> String {
    format!("/images/{}", r.id)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualView {
    pub id: String,
    pub prompt: String,
    pub token_trace: Vec<TraceToken>,
    pub image_url: Option<String>,
    pub image: Option<ImageRef>,
    pub votes: u64,
    pub degraded: bool,
    pub origin: Origin,
    pub chromosome: Chromosome,
}

impl IndividualView {
    pub fn new(ind: &Individual, schema: &AttributeSchema) -> Self {
        let prompt = ind
            .chromosome
            .to_prompt(schema)
            .expect("stored chromosomes are valid");
        IndividualView {
            id: ind.id.clone(),
            prompt: prompt.text,
            token_trace: prompt.token_trace,
            image_url: ind.image.as_ref().map(image_url),
            image: ind.image.clone(),
            votes: ind.votes,
            degraded: ind.degraded,
            origin: ind.origin.clone(),
            chromosome: ind.chromosome.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationView {
    pub api_version: u32,
    pub session_id: String,
    pub generation: u64,
    pub individuals: Vec<IndividualView>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoteRequest {
    /// Idempotency key: a repeated nonce returns the original outcome.
    #[serde(default)]
    pub nonce: Option<String>,
    /// Generation the votes were cast on; rejected when stale.
    #[serde(default)]
    pub generation: Option<u64>,
    #[serde(default)]
    pub votes: Ballot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteResponse {
    pub api_version: u32,
    /// True when the nonce had been seen and nothing was evolved.
    pub replayed: bool,
    pub population: PopulationView,
    pub stats: IterationStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsView {
    pub api_version: u32,
    pub session_id: String,
    pub scope: HistogramScope,
    pub iterations: Vec<IterationStats>,
    pub stream: StreamSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalizeResponse {
    pub api_version: u32,
    pub session_id: String,
    pub model: OptimizedPromptingModel,
    /// The model as a TOML document, loadable by `from_document`.
    pub document: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRequest {
    #[serde(default)]
    pub count: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Model document to sample from instead of the session's own state.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub width: Option<u32>,
    #[serde(default)]
    pub height: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleView {
    pub prompt: String,
    pub token_trace: Vec<TraceToken>,
    pub image_url: String,
    pub image: ImageRef,
    pub degraded: bool,
    pub chromosome: Chromosome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResponse {
    pub api_version: u32,
    pub samples: Vec<SampleView>,
}
