use super::{BackendError, Health, Image, ImageBackend, RenderRequest};
use crate::raster::render_png;

/// In-process renderer; the default backend.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProceduralBackend;

impl ImageBackend for ProceduralBackend {
    fn name(&self) -> &str {
        "procedural"
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn health(&self) -> Health {
        Health {
            backend: self.name().into(),
            healthy: true,
            detail: "in-process".into(),
        }
    }

    fn draw(&self, req: &RenderRequest) -> Result<Image, BackendError> {
        let mut c = req.chromosome.clone();
        // Validated by the caller to fit.
        c.seed = req.seed as u32;
        Ok(Image {
            bytes: render_png(&c, req.width, req.height)?,
            media_type: "image/png".into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ImageStore;
    use promptsteer_core::{AttributeSchema, Chromosome};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn same_request_same_ref() {
        let schema = AttributeSchema::kandinsky();
        let c = Chromosome::random(&schema, &mut ChaCha8Rng::seed_from_u64(1));
        let req = RenderRequest::for_chromosome(&c, &schema, 64, 64).unwrap();
        let store = ImageStore::memory();
        let a = ProceduralBackend.generate(&req, &store).unwrap();
        let b = ProceduralBackend.generate(&req, &store).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.media_type, "image/png");
        assert!(a.matches(&store.get(&a.id).unwrap().unwrap().bytes));
        assert!(ProceduralBackend.health().healthy);
    }

    #[test]
    fn request_seed_overrides_gene() {
        let schema = AttributeSchema::kandinsky();
        let c = Chromosome::random(&schema, &mut ChaCha8Rng::seed_from_u64(2));
        let mut req = RenderRequest::for_chromosome(&c, &schema, 64, 64).unwrap();
        let a = ProceduralBackend.draw(&req).unwrap();
        req.seed = (req.seed + 1) % promptsteer_core::SEED_BOUND as i64;
        assert_ne!(ProceduralBackend.draw(&req).unwrap(), a);
    }
}
