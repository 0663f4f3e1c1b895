//! Image backends and the image store they write to.

mod procedural;
mod remote;
mod store;

use std::collections::BTreeMap;

use promptsteer_core::{AttributeSchema, Chromosome, ImageRef, PromptText, SEED_BOUND};
use serde::{Deserialize, Serialize};

pub use procedural::ProceduralBackend;
pub use remote::{FieldNames, RemoteBackend, RemoteConfig};
pub use store::{sniff_media_type, ImageStore};

use crate::RenderError;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("invalid render request: {0}")]
    InvalidRequest(String),
    #[error("remote unreachable: {0}")]
    Unreachable(String),
    #[error("remote returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("remote timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("malformed remote response: {0}")]
    BadResponse(String),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("image store: {0}")]
    Store(#[from] std::io::Error),
}

/// What a backend is asked to draw.
///
/// The chromosome travels with the prompt so the procedural backend can draw
/// the genes directly; remote backends only look at the prompt text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderRequest {
    pub prompt: PromptText,
    pub chromosome: Chromosome,
    pub seed: i64,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
}

impl RenderRequest {
    pub fn for_chromosome(
        c: &Chromosome,
        schema: &AttributeSchema,
        width: u32,
        height: u32,
    ) -> Result<Self, BackendError> {
        let prompt = c
            .to_prompt(schema)
            .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        Ok(Self {
            prompt,
            chromosome: c.clone(),
            seed: c.seed as i64,
            width,
            height,
            params: BTreeMap::new(),
        })
    }

    pub fn with_params(mut self, params: BTreeMap<String, serde_json::Value>) -> Self {
        self.params = params;
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0..SEED_BOUND as i64).contains(&self.seed) {
            return Err(BackendError::InvalidRequest(format!(
                "seed {} outside [0, {SEED_BOUND})",
                self.seed
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(BackendError::InvalidRequest(format!(
                "empty canvas {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub backend: String,
    pub healthy: bool,
    /// Reason when unhealthy, otherwise a short status line.
    pub detail: String,
}

/// Encoded image bytes as produced by a backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub bytes: Vec<u8>,
    pub media_type: String,
}

pub trait ImageBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Same request, same bytes.
    fn is_deterministic(&self) -> bool;

    fn health(&self) -> Health;

    /// Produces the encoded image for a validated request.
    fn draw(&self, req: &RenderRequest) -> Result<Image, BackendError>;

    fn generate(&self, req: &RenderRequest, store: &ImageStore) -> Result<ImageRef, BackendError> {
        req.validate()?;
        let img = self.draw(req)?;
        Ok(store.put(&img.bytes, &img.media_type)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn request() -> RenderRequest {
        let schema = AttributeSchema::kandinsky();
        let c = Chromosome::random(&schema, &mut ChaCha8Rng::seed_from_u64(9));
        RenderRequest::for_chromosome(&c, &schema, 64, 64).unwrap()
    }

    #[test]
    fn negative_seed_is_rejected() {
        let mut req = request();
        req.seed = -1;
        let err = ProceduralBackend
            .generate(&req, &ImageStore::memory())
            .unwrap_err();
        assert!(matches!(err, BackendError::InvalidRequest(_)), "{err}");
        req.seed = SEED_BOUND as i64;
        assert!(req.validate().is_err());
        req.seed = SEED_BOUND as i64 - 1;
        assert!(req.validate().is_ok());
    }

    #[test]
    fn request_serializes() {
        let req = request();
        let back: RenderRequest =
            serde_json::from_str(&serde_json::to_string(&req).unwrap()).unwrap();
        assert_eq!(back, req);
    }
}
