//! Selection, crossover and mutation.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::population::{Generation, Individual};
use super::state::{EvolutionState, NormalModel, WeightTable};
use crate::chromosome::{canonicalize, random_pick_len, uniform_values, Chromosome, SEED_BOUND};
use crate::guideline::{Attribute, AttributeSchema};

/// Default per-gene mutation probability.
pub const MUTATION_RATE: f64 = 0.05;

/// Index drawn with probability proportional to `fitness`; uniform when all
/// fitness values are zero. `fitness` must be non-empty.
pub fn roulette<R: Rng + ?Sized>(fitness: &[u64], rng: &mut R) -> usize {
    let total: u64 = fitness.iter().sum();
    if total == 0 {
        return rng.random_range(0..fitness.len());
    }
    let mut ticket = rng.random_range(0..total);
    for (i, f) in fitness.iter().enumerate() {
        if ticket < *f {
            return i;
        }
        ticket -= f;
    }
    unreachable!("ticket below total fitness")
}

/// Two distinct parents by roulette wheel over votes.
///
/// The second draw excludes the first parent, which is the same distribution
/// as resampling until distinct. When nobody else has any votes the second
/// parent is uniform over the remaining individuals.
pub fn select_parent_pair<'g, R: Rng + ?Sized>(
    g: &'g Generation,
    rng: &mut R,
) -> (&'g Individual, &'g Individual) {
    let (a, b) = select_parent_indices(g, rng);
    (&g.individuals[a], &g.individuals[b])
}

pub fn select_parent_indices<R: Rng + ?Sized>(g: &Generation, rng: &mut R) -> (usize, usize) {
    assert!(g.len() >= 2, "parent selection needs two individuals");
    let mut fitness: Vec<u64> = g.individuals.iter().map(Individual::fitness).collect();
    let first = roulette(&fitness, rng);
    fitness[first] = 0;
    let second = if fitness.iter().any(|f| *f > 0) {
        roulette(&fitness, rng)
    } else {
        let k = rng.random_range(0..g.len() - 1);
        if k >= first {
            k + 1
        } else {
            k
        }
    };
    (first, second)
}

/// Draws up to `k` distinct tokens, each draw proportional to the weight of
/// the remaining entries. Entries may repeat; a drawn token removes every copy.
pub(crate) fn weighted_without_replacement<R: Rng + ?Sized>(
    mut entries: Vec<(String, f64)>,
    k: usize,
    rng: &mut R,
) -> Vec<String> {
    let mut out = Vec::with_capacity(k);
    while out.len() < k && !entries.is_empty() {
        let total: f64 = entries.iter().map(|(_, w)| w).sum();
        let mut u = rng.random::<f64>() * total;
        let mut chosen = entries.len() - 1;
        for (i, (_, w)) in entries.iter().enumerate() {
            if u < *w {
                chosen = i;
                break;
            }
            u -= w;
        }
        let token = entries[chosen].0.clone();
        entries.retain(|(t, _)| *t != token);
        out.push(token);
    }
    out
}

fn weighted_entries<'a, I>(tokens: I, weights: &WeightTable) -> Vec<(String, f64)>
where
    I: IntoIterator<Item = &'a String>,
{
    tokens
        .into_iter()
        .map(|t| (t.clone(), weights.get(t).copied().unwrap_or(1.0)))
        .collect()
}

/// Weight-proportional draw of a fresh value set for `attr` from its full value list.
pub(crate) fn weighted_values<R: Rng + ?Sized>(
    attr: &Attribute,
    weights: &WeightTable,
    rng: &mut R,
) -> Vec<String> {
    let k = random_pick_len(attr, rng);
    let mut values = weighted_without_replacement(weighted_entries(attr.values(), weights), k, rng);
    canonicalize(attr, &mut values);
    values
}

pub(crate) fn sample_normal<R: Rng + ?Sized>(model: &NormalModel, rng: &mut R) -> f64 {
    Normal::new(model.mean, model.std_dev())
        .expect("finite mean and positive variance")
        .sample(rng)
        .clamp(0.0, 1.0)
}

/// One offspring from two parents.
///
/// Seed: uniform crossover (each parent with probability 1/2). Continuous
/// genes: arithmetic mean. Discrete attributes: `k` uniform in the pick range,
/// drawn without replacement from the multiset union of both parents' values
/// with probability proportional to `weights`, backfilled from the remaining
/// values of the attribute when the union is too small.
pub fn crossover<R: Rng + ?Sized>(
    p1: &Chromosome,
    p2: &Chromosome,
    schema: &AttributeSchema,
    weights: &WeightTable,
    rng: &mut R,
) -> Chromosome {
    let seed = if rng.random_bool(0.5) {
        p1.seed
    } else {
        p2.seed
    };
    let mut discrete = BTreeMap::new();
    let mut continuous = BTreeMap::new();
    for attr in schema.attributes() {
        let id = attr.id();
        if attr.is_discrete() {
            let k = random_pick_len(attr, rng);
            let pool = p1.values_of(id).iter().chain(p2.values_of(id));
            let mut values = weighted_without_replacement(weighted_entries(pool, weights), k, rng);
            if values.len() < k {
                let unused = attr.values().iter().filter(|v| !values.contains(v));
                let fill = weighted_without_replacement(
                    weighted_entries(unused, weights),
                    k - values.len(),
                    rng,
                );
                values.extend(fill);
            }
            canonicalize(attr, &mut values);
            discrete.insert(id.to_string(), values);
        } else {
            let a = p1.gene(id).unwrap_or(0.5);
            let b = p2.gene(id).unwrap_or(0.5);
            continuous.insert(id.to_string(), (a + b) / 2.0);
        }
    }
    Chromosome {
        style: schema.style_token().to_string(),
        discrete,
        continuous,
        seed,
    }
}

/// Per-gene mutation with probability `rate`.
///
/// A mutated discrete attribute is redrawn as a whole: fresh count from the
/// pick range, values uniform without replacement. A mutated seed is uniform
/// on the seed range. A mutated continuous gene is resampled from the state's
/// normal model for that attribute, clamped to `[0, 1]`.
pub fn mutate<R: Rng + ?Sized>(
    c: &Chromosome,
    schema: &AttributeSchema,
    state: &EvolutionState,
    rng: &mut R,
    rate: f64,
) -> Chromosome {
    let rate = rate.clamp(0.0, 1.0);
    let mut out = c.clone();
    for attr in schema.attributes() {
        if !rng.random_bool(rate) {
            continue;
        }
        let id = attr.id().to_string();
        if attr.is_discrete() {
            let k = random_pick_len(attr, rng);
            out.discrete.insert(id, uniform_values(attr, k, rng));
        } else {
            let model = state
                .continuous_models
                .get(&id)
                .copied()
                .unwrap_or_default();
            out.continuous.insert(id, sample_normal(&model, rng));
        }
    }
    if rng.random_bool(rate) {
        out.seed = rng.random_range(0..SEED_BOUND);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genetics::population::Ballot;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn schema() -> AttributeSchema {
        AttributeSchema::kandinsky()
    }

    fn voted(votes: &[u64]) -> Generation {
        let g = Generation::initial(&schema(), 16, &mut ChaCha8Rng::seed_from_u64(1));
        let ballot: Ballot = votes
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0)
            .map(|(i, v)| (g.individuals[i].id.clone(), *v))
            .collect();
        g.apply_ballot(&ballot).unwrap()
    }

    #[test]
    fn roulette_only_picks_voted() {
        let g = voted(&[1, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 100_000;
        let mut first_a = 0;
        for _ in 0..draws {
            let (a, b) = select_parent_indices(&g, &mut rng);
            assert!(a < 2 && b < 2 && a != b);
            if a == 0 {
                first_a += 1;
            }
        }
        let p = first_a as f64 / draws as f64;
        assert!((p - 0.5).abs() <= 0.01, "{p}");
    }

    #[test]
    fn single_voter_pairs_with_uniform_partner() {
        let g = voted(&[4]);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut partners = vec![0usize; 16];
        for _ in 0..15_000 {
            let (a, b) = select_parent_indices(&g, &mut rng);
            assert_eq!(a, 0);
            assert_ne!(b, 0);
            partners[b] += 1;
        }
        assert_eq!(partners[0], 0);
        assert!(
            partners[1..].iter().all(|n| (800..1200).contains(n)),
            "{partners:?}"
        );
    }

    #[test]
    fn zero_votes_is_uniform_distinct() {
        let g = voted(&[]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut firsts = vec![0usize; 16];
        for _ in 0..16_000 {
            let (a, b) = select_parent_indices(&g, &mut rng);
            assert_ne!(a, b);
            firsts[a] += 1;
        }
        assert!(firsts.iter().all(|n| (800..1200).contains(n)), "{firsts:?}");
    }

    #[test]
    fn crossover_averages_continuous_genes() {
        let s = schema();
        let w = EvolutionState::new(&s).weights;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut p1 = Chromosome::random(&s, &mut rng);
        let mut p2 = Chromosome::random(&s, &mut rng);
        let same = crossover(&p1, &p1, &s, &w, &mut rng);
        assert_eq!(same.continuous, p1.continuous);
        p1.continuous.insert("brightness".into(), 0.2);
        p2.continuous.insert("brightness".into(), 0.6);
        let child = crossover(&p1, &p2, &s, &w, &mut rng);
        assert!((child.continuous["brightness"] - 0.4).abs() < 1e-15);
        assert!(child.validate(&s).is_empty());
    }

    #[test]
    fn crossover_seed_is_a_fair_coin() {
        let s = schema();
        let w = EvolutionState::new(&s).weights;
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut p1 = Chromosome::random(&s, &mut rng);
        let mut p2 = Chromosome::random(&s, &mut rng);
        p1.seed = 1;
        p2.seed = 2;
        let n = 10_000;
        let from_p1 = (0..n)
            .filter(|_| crossover(&p1, &p2, &s, &w, &mut rng).seed == 1)
            .count();
        let p = from_p1 as f64 / n as f64;
        assert!((p - 0.5).abs() <= 0.02, "{p}");
    }

    #[test]
    fn crossover_inherits_from_parents_without_duplicates() {
        let s = schema();
        let w = EvolutionState::new(&s).weights;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut p1 = Chromosome::random(&s, &mut rng);
        let mut p2 = p1.clone();
        p1.discrete
            .insert("hue".into(), vec!["red".into(), "blue".into()]);
        p2.discrete
            .insert("hue".into(), vec!["red".into(), "green".into()]);
        for _ in 0..2_000 {
            let child = crossover(&p1, &p2, &s, &w, &mut rng);
            let hues = child.values_of("hue");
            assert!(hues
                .iter()
                .all(|h| ["red", "blue", "green"].contains(&h.as_str())));
            assert!(child.validate(&s).is_empty());
        }
    }

    #[test]
    fn crossover_backfills_from_full_set() {
        let s = schema();
        let w = EvolutionState::new(&s).weights;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut p1 = Chromosome::random(&s, &mut rng);
        let mut p2 = p1.clone();
        p1.discrete.insert("form_plane".into(), vec![]);
        p2.discrete.insert("form_plane".into(), vec![]);
        let mut saw_two = false;
        for _ in 0..500 {
            let child = crossover(&p1, &p2, &s, &w, &mut rng);
            saw_two |= child.values_of("form_plane").len() == 2;
            assert!(child.validate(&s).is_empty());
        }
        assert!(saw_two);
    }

    #[test]
    fn weighted_draw_tracks_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let entries = vec![("a".to_string(), 3.0), ("b".to_string(), 1.0)];
        let n = 20_000;
        let a = (0..n)
            .filter(|_| weighted_without_replacement(entries.clone(), 1, &mut rng)[0] == "a")
            .count();
        assert!((a as f64 / n as f64 - 0.75).abs() < 0.01);
        let both = weighted_without_replacement(entries, 5, &mut rng);
        assert_eq!(both.len(), 2);
    }

    #[test]
    fn rate_zero_is_identity() {
        let s = schema();
        let state = EvolutionState::new(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..200 {
            let c = Chromosome::random(&s, &mut rng);
            assert_eq!(mutate(&c, &s, &state, &mut rng, 0.0), c);
        }
    }

    #[test]
    fn rate_one_samples_the_normal_model() {
        let s = schema();
        let mut state = EvolutionState::new(&s);
        state.continuous_models.insert(
            "brightness".into(),
            NormalModel {
                mean: 0.5,
                variance: 0.0025,
            },
        );
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let c = Chromosome::random(&s, &mut rng);
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let m = mutate(&c, &s, &state, &mut rng, 1.0);
            assert!(m.validate(&s).is_empty());
            sum += m.continuous["brightness"];
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() <= 0.005, "{mean}");
    }
}
