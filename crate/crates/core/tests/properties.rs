use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use promptsteer_core::genetics::{crossover, mutate, EvolutionParams};
use promptsteer_core::guideline::{DerivedTag, DEFAULT_TEMPLATE};
use promptsteer_core::{
    evolve, Attribute, AttributeSchema, Ballot, Chromosome, EvolutionState, Generation, PickCount,
    SEED_BOUND,
};

fn arb_schema() -> impl Strategy<Value = AttributeSchema> {
    let discrete = prop::collection::vec((1usize..6, 0usize..6, 0usize..6), 1..4);
    let continuous = prop::collection::vec((-5.0f64..5.0, 0.1f64..10.0), 1..4);
    (discrete, continuous, any::<bool>()).prop_map(|(discrete, continuous, tagged)| {
        let mut attrs = Vec::new();
        for (i, (len, a, b)) in discrete.iter().enumerate() {
            let values: Vec<String> = (0..*len).map(|j| format!("v{i}_{j}")).collect();
            let refs: Vec<&str> = values.iter().map(String::as_str).collect();
            let max = 1 + a % len;
            let min = b % (max + 1);
            attrs.push(Attribute::discrete(
                format!("d{i}"),
                &refs,
                PickCount::new(min, max),
            ));
        }
        for (i, (lo, width)) in continuous.iter().enumerate() {
            attrs.push(Attribute::continuous_over(
                format!("c{i}"),
                "low",
                "high",
                (*lo, lo + width),
            ));
        }
        let tags = if tagged {
            vec![DerivedTag {
                tag: "marked".into(),
                attribute: "d0".into(),
                any_of: vec!["v0_0".into()],
            }]
        } else {
            vec![]
        };
        AttributeSchema::new("Style", attrs, tags, DEFAULT_TEMPLATE).unwrap()
    })
}

/// Chromosome with continuous genes on the two-decimal grid the prompt prints.
fn gridded(schema: &AttributeSchema, seed: u64) -> Chromosome {
    let mut c = Chromosome::random(schema, &mut ChaCha8Rng::seed_from_u64(seed));
    for v in c.continuous.values_mut() {
        *v = (*v * 100.0).round() / 100.0;
    }
    c
}

fn genes_equal(a: &Chromosome, b: &Chromosome) -> bool {
    a.discrete == b.discrete && a.continuous == b.continuous
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn schema_toml_round_trip(schema in arb_schema()) {
        let back = AttributeSchema::from_toml(&schema.to_toml()).unwrap();
        prop_assert_eq!(&back, &schema);
        let owners: BTreeSet<&str> = schema.value_tokens().collect();
        prop_assert_eq!(owners.len(), schema.value_tokens().count());
    }

    #[test]
    fn random_chromosomes_are_valid(schema in arb_schema(), seed in any::<u64>()) {
        let c = Chromosome::random(&schema, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(c.validate(&schema).is_empty());
        prop_assert!(c.seed < SEED_BOUND);
    }

    #[test]
    fn prompt_is_pure_and_traceable(schema in arb_schema(), seed in any::<u64>()) {
        let c = Chromosome::random(&schema, &mut ChaCha8Rng::seed_from_u64(seed));
        let p = c.to_prompt(&schema).unwrap();
        prop_assert_eq!(&p, &c.to_prompt(&schema).unwrap());
        let joined: String = p.token_trace.iter().map(|t| t.token.as_str()).collect();
        prop_assert_eq!(&joined, &p.text);
        for v in c.discrete_values() {
            prop_assert_eq!(p.token_trace.iter().filter(|t| t.token == v).count(), 1);
        }
    }

    #[test]
    fn prompt_is_injective_modulo_seed(schema in arb_schema(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let a = gridded(&schema, s1);
        let mut b = gridded(&schema, s2);
        b.seed = a.seed.wrapping_add(1) % SEED_BOUND;
        let (pa, pb) = (a.to_prompt(&schema).unwrap(), b.to_prompt(&schema).unwrap());
        prop_assert_eq!(genes_equal(&a, &b), pa.text == pb.text);
    }

    #[test]
    fn operators_preserve_validity(schema in arb_schema(), seed in any::<u64>(), rate in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = EvolutionState::new(&schema);
        let p1 = Chromosome::random(&schema, &mut rng);
        let p2 = Chromosome::random(&schema, &mut rng);
        let child = crossover(&p1, &p2, &schema, &state.weights, &mut rng);
        prop_assert!(child.validate(&schema).is_empty(), "{:?}", child.validate(&schema));
        let m = mutate(&child, &schema, &state, &mut rng, rate);
        prop_assert!(m.validate(&schema).is_empty(), "{:?}", m.validate(&schema));
    }

    #[test]
    fn weights_monotone_and_conserved(seed in any::<u64>(), votes in prop::collection::vec(0u64..6, 16)) {
        let schema = AttributeSchema::kandinsky();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Generation::initial(&schema, 16, &mut rng);
        let ballot: Ballot = g.individuals.iter().zip(&votes)
            .filter(|(_, v)| **v > 0)
            .map(|(i, v)| (i.id.clone(), *v))
            .collect();
        let state = EvolutionState::new(&schema);
        let (next_gen, next) = evolve(&g, &ballot, &state, &schema, &EvolutionParams::default(), &mut rng).unwrap();
        prop_assert_eq!(next_gen.len(), 16);
        let voted = g.apply_ballot(&ballot).unwrap();
        let mut mass: BTreeMap<&str, u64> = BTreeMap::new();
        for ind in &voted.individuals {
            for v in ind.chromosome.discrete_values() {
                *mass.entry(v).or_default() += ind.votes;
            }
        }
        let mut delta_total = 0.0;
        for (v, w) in &state.weights {
            let w2 = next.weights[v];
            prop_assert!(w2 >= *w);
            let m = mass.get(v.as_str()).copied().unwrap_or(0);
            prop_assert_eq!(w2 == *w, m == 0);
            delta_total += w2 - w;
        }
        let expected: u64 = voted.individuals.iter()
            .map(|i| i.votes * i.chromosome.discrete_values().count() as u64)
            .sum();
        prop_assert_eq!(delta_total, expected as f64);
    }
}
