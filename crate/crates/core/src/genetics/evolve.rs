use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::operators::{crossover, mutate, select_parent_indices, MUTATION_RATE};
use super::population::{individual_id, Ballot, Generation, Individual, Origin};
use super::state::{EvolutionState, IterationSnapshot};
use super::GeneticsError;
use crate::guideline::AttributeSchema;

/// Default population size.
pub const POPULATION: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionParams {
    pub population: usize,
    pub mutation_rate: f64,
    /// Drop survivor images so the backend renders them again. Only useful
    /// with stochastic backends.
    #[serde(default)]
    pub rerender_survivors: bool,
}

impl Default for EvolutionParams {
    fn default() -> Self {
        EvolutionParams {
            population: POPULATION,
            mutation_rate: MUTATION_RATE,
            rerender_survivors: false,
        }
    }
}

impl EvolutionParams {
    pub fn validate(&self) -> Result<(), GeneticsError> {
        if self.population < 4 || self.population % 2 != 0 {
            return Err(GeneticsError::InvalidParams(format!(
                "population must be even and at least 4, got {}",
                self.population
            )));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(GeneticsError::InvalidParams(format!(
                "mutation rate must lie in [0, 1], got {}",
                self.mutation_rate
            )));
        }
        Ok(())
    }

    pub fn survivor_cap(&self) -> usize {
        self.population / 2
    }
}

/// Voted individuals by descending votes, ties broken by id, capped.
pub fn survivors(voted: &Generation, cap: usize) -> Vec<&Individual> {
    let mut out: Vec<&Individual> = voted.voted().collect();
    out.sort_by(|a, b| b.votes.cmp(&a.votes).then_with(|| a.id.cmp(&b.id)));
    out.truncate(cap);
    out
}

/// One vote/evolve cycle.
///
/// Applies the ballot, updates the weight table and the continuous models,
/// then builds the next generation: survivors first (carried over with their
/// images unless `rerender_survivors`), then offspring from
/// select, crossover, mutate until the population is full. Offspring have no image.
pub fn evolve<R: Rng + ?Sized>(
    g: &Generation,
    ballot: &Ballot,
    state: &EvolutionState,
    schema: &AttributeSchema,
    params: &EvolutionParams,
    rng: &mut R,
) -> Result<(Generation, EvolutionState), GeneticsError> {
    params.validate()?;
    if g.len() != params.population {
        return Err(GeneticsError::InvalidParams(format!(
            "generation has {} individuals, expected {}",
            g.len(),
            params.population
        )));
    }
    let voted = g.apply_ballot(ballot)?;
    let mut next_state = state.update_weights(&voted).update_continuous(&voted);
    next_state.history.push(Arc::new(IterationSnapshot {
        iteration: g.index,
        weights: next_state.weights.clone(),
        continuous_models: next_state.continuous_models.clone(),
        ballot: ballot
            .iter()
            .filter(|(_, v)| **v > 0)
            .map(|(k, v)| (k.clone(), *v))
            .collect(),
    }));

    let index = g.index + 1;
    let mut individuals = Vec::with_capacity(params.population);
    for s in survivors(&voted, params.survivor_cap()) {
        individuals.push(Individual {
            id: individual_id(index, individuals.len()),
            chromosome: s.chromosome.clone(),
            image: if params.rerender_survivors {
                None
            } else {
                s.image.clone()
            },
            votes: 0,
            origin: Origin::Survivor { from: s.id.clone() },
            degraded: s.degraded && !params.rerender_survivors,
        });
    }
    while individuals.len() < params.population {
        let (a, b) = select_parent_indices(&voted, rng);
        let (pa, pb) = (&voted.individuals[a], &voted.individuals[b]);
        let child = crossover(
            &pa.chromosome,
            &pb.chromosome,
            schema,
            &next_state.weights,
            rng,
        );
        let child = mutate(&child, schema, &next_state, rng, params.mutation_rate);
        individuals.push(Individual {
            id: individual_id(index, individuals.len()),
            chromosome: child,
            image: None,
            votes: 0,
            origin: Origin::Offspring {
                parents: [pa.id.clone(), pb.id.clone()],
            },
            degraded: false,
        });
    }
    Ok((Generation { index, individuals }, next_state))
}
