//! The evolutionary engine.
//!
//! Fitness is the user's vote count. Each iteration the ballot is applied,
//! every discrete value's weight grows by the votes of the individuals that
//! carry it, the continuous models are refit to the voted genes, and a new
//! population is bred by roulette-wheel selection, crossover and mutation.

mod evolve;
mod model;
mod operators;
mod population;
mod state;

use thiserror::Error;

pub use evolve::{evolve, survivors, EvolutionParams, POPULATION};
pub use model::{OptimizedPromptingModel, Provenance, MODEL_FORMAT, MODEL_VERSION};
pub use operators::{
    crossover, mutate, roulette, select_parent_indices, select_parent_pair, MUTATION_RATE,
};
pub use population::{Ballot, Generation, Individual, Origin};
pub use state::{
    ContinuousModels, EvolutionState, IterationSnapshot, NormalModel, WeightTable, INITIAL_MEAN,
    INITIAL_VARIANCE, VARIANCE_FLOOR,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneticsError {
    #[error("unknown individual `{0}`")]
    UnknownIndividual(String),
    #[error("no completed iterations to export")]
    NoIterations,
    #[error("invalid evolution parameters: {0}")]
    InvalidParams(String),
    #[error("invalid model document: {0}")]
    ModelDocument(String),
}
