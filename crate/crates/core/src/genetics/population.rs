use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GeneticsError;
use crate::chromosome::Chromosome;
use crate::guideline::AttributeSchema;
use crate::image::ImageRef;

/// Vote counts keyed by individual id. Absent ids received no votes.
pub type Ballot = BTreeMap<String, u64>;

/// Where an individual came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Origin {
    Initial,
    Survivor { from: String },
    Offspring { parents: [String; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: String,
    pub chromosome: Chromosome,
    /// `None` until the backend has rendered it.
    pub image: Option<ImageRef>,
    pub votes: u64,
    pub origin: Origin,
    /// Set when the configured backend failed and a fallback render was used.
    #[serde(default)]
    pub degraded: bool,
}

impl Individual {
    pub fn fitness(&self) -> u64 {
        self.votes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub index: u64,
    pub individuals: Vec<Individual>,
}

pub(crate) fn individual_id(generation: u64, slot: usize) -> String {
    format!("g{generation:04}-{slot:02}")
}

impl Generation {
    /// Generation 0: `n` uniform random chromosomes, no images yet.
    pub fn initial<R: Rng + ?Sized>(schema: &AttributeSchema, n: usize, rng: &mut R) -> Self {
        let individuals = (0..n)
            .map(|slot| Individual {
                id: individual_id(0, slot),
                chromosome: Chromosome::random(schema, rng),
                image: None,
                votes: 0,
                origin: Origin::Initial,
                degraded: false,
            })
            .collect();
        Generation {
            index: 0,
            individuals,
        }
    }

    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Individual> {
        self.individuals.iter().find(|i| i.id == id)
    }

    /// Every individual has an image.
    pub fn is_complete(&self) -> bool {
        self.individuals.iter().all(|i| i.image.is_some())
    }

    pub fn total_votes(&self) -> u64 {
        self.individuals.iter().map(|i| i.votes).sum()
    }

    pub fn voted(&self) -> impl Iterator<Item = &Individual> {
        self.individuals.iter().filter(|i| i.votes > 0)
    }

    pub fn has_unique_ids(&self) -> bool {
        let ids: BTreeSet<&str> = self.individuals.iter().map(|i| i.id.as_str()).collect();
        ids.len() == self.individuals.len()
    }

    /// Copy of the generation with votes taken from `ballot`; ids missing from
    /// the ballot get zero.
    pub fn apply_ballot(&self, ballot: &Ballot) -> Result<Generation, GeneticsError> {
        if let Some(unknown) = ballot.keys().find(|id| self.get(id).is_none()) {
            return Err(GeneticsError::UnknownIndividual(unknown.clone()));
        }
        let mut g = self.clone();
        for ind in &mut g.individuals {
            ind.votes = ballot.get(&ind.id).copied().unwrap_or(0);
        }
        Ok(g)
    }
}
