//! Preference-driven genetic prompt optimization.
//!
//! A user steers a text-to-image pipeline by voting on generated images; the
//! votes drive a genetic algorithm over prompt genotypes drawn from a semantic
//! attribute schema, and the learned preferences are frozen into an
//! [`OptimizedPromptingModel`] that samples new prompts on its own.
//!
//! - [`guideline`]: attribute/value schemas (the gene space)
//! - [`chromosome`]: prompt genotypes and prompt-text serialization
//! - [`genetics`]: weights, selection, crossover, mutation, evolution, export
//! - [`analytics`]: radar/bar/stream chart data and the session log

pub mod analytics;
pub mod chromosome;
pub mod genetics;
pub mod guideline;
pub mod image;

pub use chromosome::{Chromosome, GeneSlot, PromptText, TraceToken, Violation, SEED_BOUND};
pub use genetics::{
    evolve, Ballot, EvolutionParams, EvolutionState, Generation, Individual,
    OptimizedPromptingModel,
};
pub use guideline::{Attribute, AttributeSchema, PickCount};
pub use image::ImageRef;
