//! Simulated users and the convergence experiment.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use promptsteer_core::{
    evolve, AttributeSchema, Ballot, Chromosome, EvolutionParams, EvolutionState, Generation,
    SEED_BOUND,
};
use promptsteer_render::{ImageBackend, ImageStore, ProceduralBackend, RenderRequest};
use promptsteer_service::iteration_rng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SCHEDULE: [u64; 4] = [4, 3, 2, 1];
pub const DEFAULT_TOLERANCE: f64 = 0.20;

/// Mean per-attribute agreement, in `[0, 1]`.
///
/// A discrete attribute scores the Jaccard overlap of its value sets (two
/// empty sets agree fully); a continuous one scores `1 - |difference|`.
pub fn similarity(c: &Chromosome, target: &Chromosome, schema: &AttributeSchema) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for a in schema.discrete() {
        let mine = c.values_of(a.id());
        let wanted = target.values_of(a.id());
        let shared = mine.iter().filter(|v| wanted.contains(v)).count();
        let union = mine.len() + wanted.len() - shared;
        total += if union == 0 {
            1.0
        } else {
            shared as f64 / union as f64
        };
        count += 1;
    }
    for a in schema.continuous() {
        let id = a.id();
        total += 1.0 - (c.gene(id).unwrap_or(0.5) - target.gene(id).unwrap_or(0.5)).abs();
        count += 1;
    }
    if count == 0 {
        1.0
    } else {
        total / count as f64
    }
}

/// A voter with a fixed preferred chromosome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedUser {
    pub target: Chromosome,
    /// Votes for the best, second best, ... individual.
    pub schedule: Vec<u64>,
}

impl SimulatedUser {
    pub fn new(target: Chromosome) -> Self {
        SimulatedUser {
            target,
            schedule: DEFAULT_SCHEDULE.to_vec(),
        }
    }

    /// Total votes cast per iteration.
    pub fn budget(&self) -> u64 {
        self.schedule.iter().sum()
    }

    /// Target with exactly one value per discrete attribute.
    pub fn random_target<R: Rng + ?Sized>(schema: &AttributeSchema, rng: &mut R) -> Chromosome {
        let discrete: BTreeMap<String, Vec<String>> = schema
            .discrete()
            .map(|a| {
                let v = a.values().choose(rng).expect("non-empty").clone();
                (a.id().to_string(), vec![v])
            })
            .collect();
        let continuous = schema
            .continuous()
            .map(|a| (a.id().to_string(), rng.random::<f64>()))
            .collect();
        Chromosome {
            style: schema.style_token().to_string(),
            discrete,
            continuous,
            seed: rng.random_range(0..SEED_BOUND),
        }
    }

    /// Ranks by similarity (ties by id) and hands out the schedule.
    pub fn ballot(&self, g: &Generation, schema: &AttributeSchema) -> Ballot {
        let mut ranked: Vec<(f64, &str)> = g
            .individuals
            .iter()
            .map(|i| {
                (
                    similarity(&i.chromosome, &self.target, schema),
                    i.id.as_str(),
                )
            })
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        ranked
            .iter()
            .zip(&self.schedule)
            .filter(|(_, v)| **v > 0)
            .map(|((_, id), v)| (id.to_string(), *v))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub schema: AttributeSchema,
    pub params: EvolutionParams,
    pub runs: usize,
    pub iterations: u64,
    pub master_seed: u64,
    /// Canvas for the procedural renders; `None` skips rendering.
    pub canvas: Option<(u32, u32)>,
    pub schedule: Vec<u64>,
    pub tolerance: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            schema: AttributeSchema::kandinsky(),
            params: EvolutionParams::default(),
            runs: 50,
            iterations: 5,
            master_seed: 0,
            canvas: Some((512, 512)),
            schedule: DEFAULT_SCHEDULE.to_vec(),
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

/// Where one run stood after some number of iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPoint {
    /// attribute -> argmax weight is unique and equals the target value
    pub matched: BTreeMap<String, bool>,
    /// attribute -> |model mean - target gene|
    pub error: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub run: usize,
    pub target: Chromosome,
    /// One point per iteration, starting with the initial state.
    pub points: Vec<RunPoint>,
    pub degraded_images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub iteration: u64,
    pub match_rate: BTreeMap<String, f64>,
    pub within_tolerance_rate: BTreeMap<String, f64>,
    pub mean_error: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub runs: usize,
    pub iterations: u64,
    pub master_seed: u64,
    pub tolerance: f64,
    pub rows: Vec<IterationRow>,
    pub traces: Vec<RunTrace>,
}

pub fn observe(state: &EvolutionState, target: &Chromosome, schema: &AttributeSchema) -> RunPoint {
    let matched = schema
        .discrete()
        .map(|a| {
            let top = a
                .values()
                .iter()
                .map(|v| state.weight(v))
                .fold(f64::NEG_INFINITY, f64::max);
            let leaders: Vec<&String> = a
                .values()
                .iter()
                .filter(|v| state.weight(v) == top)
                .collect();
            let hit = leaders.len() == 1 && target.values_of(a.id()).contains(leaders[0]);
            (a.id().to_string(), hit)
        })
        .collect();
    let error = schema
        .continuous()
        .map(|a| {
            let mean = state.continuous_models[a.id()].mean;
            (
                a.id().to_string(),
                (mean - target.gene(a.id()).unwrap_or(0.5)).abs(),
            )
        })
        .collect();
    RunPoint { matched, error }
}

fn render_all(
    g: &mut Generation,
    schema: &AttributeSchema,
    canvas: (u32, u32),
    store: &ImageStore,
) -> usize {
    let mut degraded = 0;
    for ind in g.individuals.iter_mut().filter(|i| i.image.is_none()) {
        let req = RenderRequest::for_chromosome(&ind.chromosome, schema, canvas.0, canvas.1)
            .expect("evolved chromosomes are valid");
        match ProceduralBackend.generate(&req, store) {
            Ok(r) => ind.image = Some(r),
            Err(_) => {
                ind.degraded = true;
                degraded += 1;
            }
        }
    }
    degraded
}

/// Seed of one run: a draw from the master seed's stream numbered `run`.
pub fn run_seed(master_seed: u64, run: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(run as u64);
    rng.random()
}

/// One simulated session. Everything derives from [`run_seed`].
pub fn simulate_run(cfg: &SimConfig, run: usize) -> RunTrace {
    let schema = &cfg.schema;
    let seed = run_seed(cfg.master_seed, run);
    let mut target_rng = ChaCha8Rng::seed_from_u64(seed);
    target_rng.set_stream(u64::MAX);
    let user = SimulatedUser {
        target: SimulatedUser::random_target(schema, &mut target_rng),
        schedule: cfg.schedule.clone(),
    };
    let store = ImageStore::memory();
    let mut degraded_images = 0;
    let mut g = Generation::initial(schema, cfg.params.population, &mut iteration_rng(seed, 0));
    let mut state = EvolutionState::new(schema);
    let mut points = vec![observe(&state, &user.target, schema)];
    if let Some(canvas) = cfg.canvas {
        degraded_images += render_all(&mut g, schema, canvas, &store);
    }
    for k in 1..=cfg.iterations {
        let ballot = user.ballot(&g, schema);
        let (next, st) = evolve(
            &g,
            &ballot,
            &state,
            schema,
            &cfg.params,
            &mut iteration_rng(seed, k),
        )
        .expect("simulated ballots name existing individuals");
        g = next;
        state = st;
        if let Some(canvas) = cfg.canvas {
            degraded_images += render_all(&mut g, schema, canvas, &store);
        }
        points.push(observe(&state, &user.target, schema));
    }
    RunTrace {
        run,
        target: user.target,
        points,
        degraded_images,
    }
}

/// Runs in parallel; the report does not depend on scheduling.
pub fn simulate(cfg: &SimConfig) -> ConvergenceReport {
    let traces: Vec<RunTrace> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| simulate_run(cfg, run))
        .collect();
    let n = cfg.runs.max(1) as f64;
    let rows = (0..=cfg.iterations)
        .map(|k| {
            fn at(t: &RunTrace, k: u64) -> &RunPoint {
                &t.points[k as usize]
            }
            let match_rate = cfg
                .schema
                .discrete()
                .map(|a| {
                    let hits = traces.iter().filter(|t| at(t, k).matched[a.id()]).count();
                    (a.id().to_string(), hits as f64 / n)
                })
                .collect();
            let within_tolerance_rate = cfg
                .schema
                .continuous()
                .map(|a| {
                    let hits = traces
                        .iter()
                        .filter(|t| at(t, k).error[a.id()] <= cfg.tolerance)
                        .count();
                    (a.id().to_string(), hits as f64 / n)
                })
                .collect();
            let mean_error = cfg
                .schema
                .continuous()
                .map(|a| {
                    let sum: f64 = traces.iter().map(|t| at(t, k).error[a.id()]).sum();
                    (a.id().to_string(), sum / n)
                })
                .collect();
            IterationRow {
                iteration: k,
                match_rate,
                within_tolerance_rate,
                mean_error,
            }
        })
        .collect();
    ConvergenceReport {
        runs: cfg.runs,
        iterations: cfg.iterations,
        master_seed: cfg.master_seed,
        tolerance: cfg.tolerance,
        rows,
        traces,
    }
}

impl ConvergenceReport {
    /// Plain-text table, one row per iteration.
    pub fn table(&self) -> String {
        let Some(first) = self.rows.first() else {
            return String::new();
        };
        let mut out = String::new();
        let _ = write!(out, "{:>4}", "iter");
        for a in first.match_rate.keys() {
            let _ = write!(out, " {:>12}", a);
        }
        for a in first.within_tolerance_rate.keys() {
            let _ = write!(
                out,
                " {:>12} {:>8}",
                format!("{a}<={}", self.tolerance),
                "err"
            );
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:>4}", row.iteration);
            for r in row.match_rate.values() {
                let _ = write!(out, " {:>11.1}%", 100.0 * r);
            }
            for (a, r) in &row.within_tolerance_rate {
                let _ = write!(out, " {:>11.1}% {:>8.3}", 100.0 * r, row.mean_error[a]);
            }
            out.push('\n');
        }
        out
    }

    pub fn final_row(&self) -> &IterationRow {
        self.rows.last().expect("at least the initial row")
    }
}
