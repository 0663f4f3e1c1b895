//! Procedural renderer and image backends.
//!
//! [`render`] turns a chromosome into an RGB8 raster without any model in the
//! loop. [`backend`] wraps it, and a remote txt2img client, behind one trait
//! that stores results in a content-addressed [`ImageStore`].

pub mod backend;
pub mod compose;
pub mod palette;
pub mod raster;

pub use backend::{
    Health, ImageBackend, ImageStore, ProceduralBackend, RemoteBackend, RemoteConfig, RenderRequest,
};
pub use compose::{compose, Composition, Element, ElementKind};
pub use raster::{encode_png, mean_luminance, rasterize, render, render_png, to_svg, RgbImage};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RenderError {
    #[error("canvas {width}x{height} is smaller than the 64x64 minimum")]
    DegenerateCanvas { width: u32, height: u32 },
    #[error("invalid chromosome: {0}")]
    InvalidChromosome(String),
    #[error("image encoding failed: {0}")]
    Encode(String),
}
