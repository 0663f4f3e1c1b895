use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::population::{Ballot, Generation};
use crate::guideline::AttributeSchema;

/// Lower bound on the variance of every continuous model (sigma = 0.05).
pub const VARIANCE_FLOOR: f64 = 0.0025;

/// Initial continuous model: the moments of the uniform distribution on
/// `[0, 1]`, which is what generation 0 is drawn from.
pub const INITIAL_MEAN: f64 = 0.5;
pub const INITIAL_VARIANCE: f64 = 1.0 / 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalModel {
    pub mean: f64,
    pub variance: f64,
}

impl NormalModel {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

impl Default for NormalModel {
    fn default() -> Self {
        NormalModel {
            mean: INITIAL_MEAN,
            variance: INITIAL_VARIANCE,
        }
    }
}

pub type WeightTable = BTreeMap<String, f64>;
pub type ContinuousModels = BTreeMap<String, NormalModel>;

/// Weights and models after one iteration, plus the ballot that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSnapshot {
    pub iteration: u64,
    pub weights: WeightTable,
    pub continuous_models: ContinuousModels,
    pub ballot: Ballot,
}

/// The learned preference: one weight per discrete value and one normal model
/// per continuous attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionState {
    pub weights: WeightTable,
    pub continuous_models: ContinuousModels,
    /// Shared so that deriving the next state does not copy every past iteration.
    #[serde(default)]
    pub history: Vec<Arc<IterationSnapshot>>,
}

impl EvolutionState {
    /// Every discrete value at weight 1, every continuous model at the
    /// uniform-prior moments.
    pub fn new(schema: &AttributeSchema) -> Self {
        EvolutionState {
            weights: schema
                .value_tokens()
                .map(|v| (v.to_string(), 1.0))
                .collect(),
            continuous_models: schema
                .continuous()
                .map(|a| (a.id().to_string(), NormalModel::default()))
                .collect(),
            history: Vec::new(),
        }
    }

    /// Completed iterations.
    pub fn iterations(&self) -> u64 {
        self.history.len() as u64
    }

    pub fn weight(&self, token: &str) -> f64 {
        self.weights.get(token).copied().unwrap_or(1.0)
    }

    /// `w_v += sum of votes of every individual whose chromosome carries v`.
    pub fn update_weights(&self, voted: &Generation) -> EvolutionState {
        let mut next = self.clone();
        for ind in voted.voted() {
            for v in ind.chromosome.discrete_values() {
                if let Some(w) = next.weights.get_mut(v) {
                    *w += ind.votes as f64;
                }
            }
        }
        next
    }

    /// Replaces every continuous model with the vote-weighted mean and
    /// variance of the voted individuals' genes. No-op without votes.
    pub fn update_continuous(&self, voted: &Generation) -> EvolutionState {
        let mut next = self.clone();
        let total = voted.total_votes();
        if total == 0 {
            return next;
        }
        let total = total as f64;
        for (attr, model) in next.continuous_models.iter_mut() {
            let samples: Vec<(f64, f64)> = voted
                .voted()
                .filter_map(|i| i.chromosome.gene(attr).map(|x| (x, i.votes as f64)))
                .collect();
            let mean = samples.iter().map(|(x, w)| w * x).sum::<f64>() / total;
            let variance = samples
                .iter()
                .map(|(x, w)| w * (x - mean) * (x - mean))
                .sum::<f64>()
                / total;
            *model = NormalModel {
                mean,
                variance: variance.max(VARIANCE_FLOOR),
            };
        }
        next
    }

    /// Normalized weight per value within each discrete attribute.
    pub fn normalized(&self, schema: &AttributeSchema) -> BTreeMap<String, BTreeMap<String, f64>> {
        schema
            .discrete()
            .map(|attr| {
                let sum: f64 = attr.values().iter().map(|v| self.weight(v)).sum();
                let shares = attr
                    .values()
                    .iter()
                    .map(|v| (v.clone(), self.weight(v) / sum))
                    .collect();
                (attr.id().to_string(), shares)
            })
            .collect()
    }

    /// State without the per-iteration history.
    pub fn snapshot(&self) -> EvolutionState {
        EvolutionState {
            weights: self.weights.clone(),
            continuous_models: self.continuous_models.clone(),
            history: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genetics::population::Ballot;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn generation_with(hues: &[(&str, u64)]) -> Generation {
        let schema = AttributeSchema::kandinsky();
        let mut g = Generation::initial(&schema, 16, &mut ChaCha8Rng::seed_from_u64(9));
        for ind in &mut g.individuals {
            ind.chromosome
                .discrete
                .insert("hue".into(), vec!["blue".into()]);
            ind.chromosome.discrete.insert("form_plane".into(), vec![]);
        }
        let mut ballot = Ballot::new();
        for (i, (hue, votes)) in hues.iter().enumerate() {
            g.individuals[i]
                .chromosome
                .discrete
                .insert("hue".into(), vec![hue.to_string()]);
            ballot.insert(g.individuals[i].id.clone(), *votes);
        }
        g.apply_ballot(&ballot).unwrap()
    }

    #[test]
    fn initial_weights_are_one() {
        let s = EvolutionState::new(&AttributeSchema::kandinsky());
        assert_eq!(s.weights.len(), 13);
        assert!(s.weights.values().all(|w| *w == 1.0));
        assert_eq!(s.continuous_models.len(), 3);
    }

    #[test]
    fn zero_votes_change_nothing() {
        let s = EvolutionState::new(&AttributeSchema::kandinsky());
        let g = generation_with(&[]);
        assert_eq!(s.update_weights(&g), s);
        assert_eq!(s.update_continuous(&g), s);
    }

    #[test]
    fn votes_accumulate_per_value() {
        let s = EvolutionState::new(&AttributeSchema::kandinsky());
        let g = generation_with(&[("red", 2), ("red", 3)]);
        let next = s.update_weights(&g);
        assert_eq!(next.weight("red"), 6.0);
        assert_eq!(next.weight("circle"), 1.0);
        assert_eq!(next.weight("blue"), 1.0);
    }

    #[test]
    fn weighted_moments() {
        let s = EvolutionState::new(&AttributeSchema::kandinsky());
        let mut g = generation_with(&[("red", 3), ("blue", 1)]);
        g.individuals[0]
            .chromosome
            .continuous
            .insert("brightness".into(), 0.2);
        g.individuals[1]
            .chromosome
            .continuous
            .insert("brightness".into(), 0.6);
        let m = s.update_continuous(&g).continuous_models["brightness"];
        // 3 * 0.2 + 1 * 0.6 = 1.2 over 4 votes; (3 * 0.01 + 0.09) / 4
        assert!((m.mean - 0.3).abs() < 1e-12);
        assert!((m.variance - 0.03).abs() < 1e-12);
    }

    #[test]
    fn single_voter_hits_variance_floor() {
        let s = EvolutionState::new(&AttributeSchema::kandinsky());
        let g = generation_with(&[("red", 5)]);
        let next = s.update_continuous(&g);
        for (attr, m) in &next.continuous_models {
            assert_eq!(m.variance, VARIANCE_FLOOR, "{attr}");
            assert_eq!(m.mean, g.individuals[0].chromosome.continuous[attr]);
        }
    }

    #[test]
    fn normalization_per_attribute() {
        let schema = AttributeSchema::kandinsky();
        let mut s = EvolutionState::new(&schema);
        s.weights.insert("red".into(), 6.0);
        let n = s.normalized(&schema);
        assert!((n["hue"]["red"] - 6.0 / 11.0).abs() < 1e-15);
        assert!((n["hue"]["blue"] - 1.0 / 11.0).abs() < 1e-15);
        assert_eq!(n["form_point"]["point"], 1.0);
    }
}
