//! Session engine: the interactive loop without the HTTP layer.
//!
//! Every session is a log in the [`LogStore`]. A ballot is accepted only after
//! the next generation is fully rendered and its record is committed, so the
//! log always ends at a complete generation and a restarted engine resumes
//! exactly there. Evolve steps of one session are serialized by a writer lock
//! that callers never wait on: a second concurrent ballot is a conflict.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::thread;
use std::time::{Duration, Instant};

use promptsteer_core::analytics::{
    compute_stats, stream, BallotEntry, HistogramScope, IterationStats, LogRecord, LogStore,
    SessionHeader, SessionLog,
};
use promptsteer_core::{
    evolve, AttributeSchema, Chromosome, EvolutionParams, EvolutionState, Generation, ImageRef,
    OptimizedPromptingModel,
};
use promptsteer_render::backend::Image;
use promptsteer_render::{Health, ImageBackend, ImageStore, ProceduralBackend, RenderRequest};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{BackendChoice, SessionConfig, StoredSettings, DEFAULT_SIZE};
use crate::views::{
    image_url, FinalizeResponse, IndividualView, PopulationView, SampleRequest, SampleResponse,
    SampleView, StatsView, VoteRequest, VoteResponse, API_VERSION,
};
use crate::ServiceError;

pub const DEFAULT_IDLE_TTL: Duration = Duration::from_secs(24 * 60 * 60);
pub const MAX_SAMPLES: usize = 64;
/// Attempts per image on the session backend before the procedural fallback.
const RENDER_ATTEMPTS: usize = 3;

/// Generator for generation `k` of a session: generation 0 is drawn from
/// stream 0, the evolve step producing generation `k` from stream `k`.
pub fn iteration_rng(master_seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(k);
    rng
}

#[derive(Debug, Clone)]
pub struct EngineOptions {
    pub data_dir: PathBuf,
    pub idle_ttl: Duration,
}

impl EngineOptions {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        EngineOptions {
            data_dir: data_dir.into(),
            idle_ttl: DEFAULT_IDLE_TTL,
        }
    }
}

struct Snapshot {
    log: SessionLog,
    state: EvolutionState,
}

struct Session {
    id: String,
    schema: AttributeSchema,
    params: EvolutionParams,
    master_seed: u64,
    settings: StoredSettings,
    backend: Box<dyn ImageBackend>,
    current: RwLock<Arc<Snapshot>>,
    writer: Mutex<()>,
    touched: Mutex<Instant>,
}

impl Session {
    fn snapshot(&self) -> Arc<Snapshot> {
        self.current.read().expect("session poisoned").clone()
    }

    fn touch(&self) {
        *self.touched.lock().expect("session poisoned") = Instant::now();
    }

    fn idle_for(&self) -> Duration {
        self.touched.lock().expect("session poisoned").elapsed()
    }
}

pub struct Engine {
    logs: LogStore,
    images: ImageStore,
    sessions: Mutex<HashMap<String, Arc<Session>>>,
    idle_ttl: Duration,
}

fn storage(e: std::io::Error) -> ServiceError {
    ServiceError::Storage(e.to_string())
}

impl Engine {
    /// Logs go to `<data_dir>/sessions`, images to `<data_dir>/images`.
    pub fn open(options: EngineOptions) -> Result<Self, ServiceError> {
        let logs = LogStore::open(options.data_dir.join("sessions"))?;
        let images = ImageStore::disk(options.data_dir.join("images")).map_err(storage)?;
        Ok(Engine {
            logs,
            images,
            sessions: Mutex::new(HashMap::new()),
            idle_ttl: options.idle_ttl,
        })
    }

    pub fn log_dir(&self) -> &Path {
        self.logs.dir()
    }

    pub fn health(&self) -> Health {
        ProceduralBackend.health()
    }

    /// Sessions currently held in memory.
    pub fn resident_sessions(&self) -> usize {
        self.sessions.lock().expect("engine poisoned").len()
    }

    /// Drops idle sessions from memory. Their logs stay and reload on demand.
    pub fn evict_idle(&self) -> usize {
        let mut map = self.sessions.lock().expect("engine poisoned");
        let before = map.len();
        map.retain(|_, s| s.idle_for() < self.idle_ttl || s.writer.try_lock().is_err());
        before - map.len()
    }

    pub fn create_session(&self, cfg: SessionConfig) -> Result<PopulationView, ServiceError> {
        let schema = cfg.validate()?;
        let params = cfg.params();
        let id = cfg
            .session_id
            .clone()
            .unwrap_or_else(|| uuid::Uuid::new_v4().simple().to_string());
        // Any path lookup rejects ids unusable as file names.
        self.logs.path_for(&id)?;
        let backend = cfg.backend.build();
        let health = backend.health();
        if !health.healthy {
            return Err(ServiceError::BackendUnhealthy(health.detail));
        }
        let master_seed = cfg.master_seed.unwrap_or_else(rand::random);
        let settings = StoredSettings {
            backend: cfg.backend.clone(),
            backend_params: cfg.backend_params.clone(),
            width: cfg.width,
            height: cfg.height,
        };

        let mut header = SessionHeader::new(&id, schema.clone(), params, master_seed);
        header.settings = settings.to_map();
        let session = Session {
            id: id.clone(),
            schema,
            params,
            master_seed,
            settings,
            backend,
            current: RwLock::new(Arc::new(Snapshot {
                log: SessionLog::new(header.clone()),
                state: EvolutionState::new(&header.schema),
            })),
            writer: Mutex::new(()),
            touched: Mutex::new(Instant::now()),
        };

        let mut g = Generation::initial(
            &session.schema,
            params.population,
            &mut iteration_rng(master_seed, 0),
        );
        self.render_generation(&session, &mut g)?;
        let state = EvolutionState::new(&session.schema);
        let stats = compute_stats(&state, &g, &session.schema, HistogramScope::Voted);
        let mut log = SessionLog::new(header);
        let record = LogRecord {
            index: 0,
            ballot: None,
            generation: g,
            state: state.snapshot(),
            stats,
        };

        let mut map = self.sessions.lock().expect("engine poisoned");
        if map.contains_key(&id) || self.logs.exists(&id) {
            return Err(ServiceError::SessionExists(id));
        }
        self.logs.append(&mut log, record)?;
        *session.current.write().expect("session poisoned") = Arc::new(Snapshot { log, state });
        let session = Arc::new(session);
        map.insert(id, session.clone());
        drop(map);
        Ok(population_view(&session, &session.snapshot().log, None))
    }

    fn session(&self, id: &str) -> Result<Arc<Session>, ServiceError> {
        self.evict_idle();
        let mut map = self.sessions.lock().expect("engine poisoned");
        if let Some(s) = map.get(id) {
            s.touch();
            return Ok(s.clone());
        }
        let session = Arc::new(self.restore(id)?);
        map.insert(id.to_string(), session.clone());
        Ok(session)
    }

    /// Rebuilds a session from its log.
    fn restore(&self, id: &str) -> Result<Session, ServiceError> {
        let log = self.logs.load(id)?;
        let header = log.header().clone();
        let settings = StoredSettings::from_map(&header.settings)?;
        let state = log
            .current_state()
            .ok_or_else(|| ServiceError::Storage(format!("session `{id}` has no records")))?;
        let session = Session {
            id: id.to_string(),
            schema: header.schema.clone(),
            params: header.params,
            master_seed: header.master_seed,
            backend: settings.backend.build(),
            settings,
            current: RwLock::new(Arc::new(Snapshot { log, state })),
            writer: Mutex::new(()),
            touched: Mutex::new(Instant::now()),
        };
        // Images may live in a store that did not survive; deterministic
        // backends reproduce the same content ids.
        let snap = session.snapshot();
        let last = snap.log.last().expect("checked above");
        for ind in &last.generation.individuals {
            if let Some(r) = &ind.image {
                if !self.images.contains(&r.id) && session.backend.is_deterministic() {
                    let (fresh, _) = self.render_one(&session, &ind.id, &ind.chromosome)?;
                    if fresh != *r {
                        return Err(ServiceError::Storage(format!(
                            "image {} of `{}` is missing and cannot be reproduced",
                            r.id, ind.id
                        )));
                    }
                }
            }
        }
        drop(snap);
        Ok(session)
    }

    fn render_one(
        &self,
        session: &Session,
        individual: &str,
        c: &Chromosome,
    ) -> Result<(ImageRef, bool), ServiceError> {
        let s = &session.settings;
        let req = RenderRequest::for_chromosome(c, &session.schema, s.width, s.height)
            .map_err(|e| ServiceError::Render {
                individual: individual.to_string(),
                reason: e.to_string(),
            })?
            .with_params(s.backend_params.clone());
        for _ in 0..RENDER_ATTEMPTS {
            if let Ok(r) = session.backend.generate(&req, &self.images) {
                return Ok((r, false));
            }
        }
        ProceduralBackend
            .generate(&req, &self.images)
            .map(|r| (r, !matches!(s.backend, BackendChoice::Procedural)))
            .map_err(|e| ServiceError::Render {
                individual: individual.to_string(),
                reason: e.to_string(),
            })
    }

    /// Renders every individual without an image, fanning out over threads.
    fn render_generation(&self, session: &Session, g: &mut Generation) -> Result<(), ServiceError> {
        let todo: Vec<usize> = (0..g.len())
            .filter(|&i| g.individuals[i].image.is_none())
            .collect();
        if todo.is_empty() {
            return Ok(());
        }
        let workers = thread::available_parallelism()
            .map_or(4, |n| n.get())
            .min(todo.len());
        let chunk = todo.len().div_ceil(workers);
        let results: Vec<(usize, Result<(ImageRef, bool), ServiceError>)> =
            thread::scope(|scope| {
                let handles: Vec<_> = todo
                    .chunks(chunk)
                    .map(|part| {
                        let g = &*g;
                        scope.spawn(move || {
                            part.iter()
                                .map(|&i| {
                                    let ind = &g.individuals[i];
                                    (i, self.render_one(session, &ind.id, &ind.chromosome))
                                })
                                .collect::<Vec<_>>()
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .flat_map(|h| h.join().expect("render worker panicked"))
                    .collect()
            });
        for (i, result) in results {
            let (image, degraded) = result?;
            let ind = &mut g.individuals[i];
            ind.image = Some(image);
            ind.degraded = degraded;
        }
        Ok(())
    }

    pub fn population(&self, id: &str) -> Result<PopulationView, ServiceError> {
        let s = self.session(id)?;
        let snap = s.snapshot();
        Ok(population_view(&s, &snap.log, None))
    }

    pub fn submit_votes(&self, id: &str, req: VoteRequest) -> Result<VoteResponse, ServiceError> {
        let session = self.session(id)?;
        let Ok(_writer) = session.writer.try_lock() else {
            return Err(ServiceError::EvolveInProgress);
        };
        let snap = session.snapshot();
        let last = snap.log.last().expect("sessions have a record");

        if let Some(nonce) = &req.nonce {
            let seen = snap.log.records().iter().find(|r| {
                r.ballot
                    .as_ref()
                    .and_then(|b| b.nonce.as_ref())
                    .is_some_and(|n| n == nonce)
            });
            if let Some(record) = seen {
                return Ok(VoteResponse {
                    api_version: API_VERSION,
                    replayed: true,
                    population: population_view(&session, &snap.log, Some(record.index)),
                    stats: record.stats.clone(),
                });
            }
        }
        if let Some(submitted) = req.generation {
            if submitted != last.index {
                return Err(ServiceError::StaleGeneration {
                    submitted,
                    current: last.index,
                });
            }
        }

        let g = &last.generation;
        let voted = g.apply_ballot(&req.votes)?;
        let mut rng = iteration_rng(session.master_seed, g.index + 1);
        let (mut next, state) = evolve(
            g,
            &req.votes,
            &snap.state,
            &session.schema,
            &session.params,
            &mut rng,
        )?;
        self.render_generation(&session, &mut next)?;
        let mut stats = compute_stats(&state, &voted, &session.schema, HistogramScope::Voted);
        stats.iteration = next.index;
        let record = LogRecord {
            index: next.index,
            ballot: Some(BallotEntry {
                nonce: req.nonce.clone(),
                votes: req.votes.clone(),
            }),
            generation: next,
            state: state.snapshot(),
            stats: stats.clone(),
        };
        let mut log = snap.log.clone();
        self.logs.append(&mut log, record)?;
        let fresh = Arc::new(Snapshot { log, state });
        *session.current.write().expect("session poisoned") = fresh.clone();
        Ok(VoteResponse {
            api_version: API_VERSION,
            replayed: false,
            population: population_view(&session, &fresh.log, None),
            stats,
        })
    }

    pub fn stats(&self, id: &str, scope: HistogramScope) -> Result<StatsView, ServiceError> {
        let session = self.session(id)?;
        let snap = session.snapshot();
        let records = snap.log.records();
        let iterations = match scope {
            HistogramScope::Voted => records.iter().map(|r| r.stats.clone()).collect(),
            HistogramScope::Population => records
                .iter()
                .enumerate()
                .map(|(k, r)| {
                    let source = match &r.ballot {
                        None => r.generation.clone(),
                        Some(b) => records[k - 1].generation.apply_ballot(&b.votes)?,
                    };
                    let mut st = compute_stats(&r.state, &source, &session.schema, scope);
                    st.iteration = r.index;
                    Ok(st)
                })
                .collect::<Result<Vec<IterationStats>, ServiceError>>()?,
        };
        Ok(StatsView {
            api_version: API_VERSION,
            session_id: session.id.clone(),
            scope,
            iterations,
            stream: stream(&snap.log)?,
        })
    }

    pub fn finalize(&self, id: &str) -> Result<FinalizeResponse, ServiceError> {
        let session = self.session(id)?;
        let snap = session.snapshot();
        let model = OptimizedPromptingModel::export(&snap.state, &session.schema, &session.id)?;
        Ok(FinalizeResponse {
            api_version: API_VERSION,
            session_id: session.id.clone(),
            document: model.to_document(),
            model,
        })
    }

    /// Samples from a session's current preferences, or from `req.model`.
    pub fn sample(
        &self,
        id: Option<&str>,
        req: SampleRequest,
    ) -> Result<SampleResponse, ServiceError> {
        if req.count > MAX_SAMPLES {
            return Err(ServiceError::Validation(format!(
                "count {} exceeds {MAX_SAMPLES}",
                req.count
            )));
        }
        let session = id.map(|id| self.session(id)).transpose()?;
        let model = match (&req.model, &session) {
            (Some(doc), _) => OptimizedPromptingModel::from_document(doc)?,
            (None, Some(s)) => {
                OptimizedPromptingModel::export(&s.snapshot().state, &s.schema, &s.id)?
            }
            (None, None) => {
                return Err(ServiceError::Validation(
                    "a model document is required".into(),
                ))
            }
        };
        let schema = model.schema();
        let (dw, dh) = session.as_ref().map_or((DEFAULT_SIZE, DEFAULT_SIZE), |s| {
            (s.settings.width, s.settings.height)
        });
        let (width, height) = (req.width.unwrap_or(dw), req.height.unwrap_or(dh));
        if !(64..=2048).contains(&width) || !(64..=2048).contains(&height) {
            return Err(ServiceError::Validation(format!(
                "canvas {width}x{height} outside 64..=2048"
            )));
        }
        let mut rng = match req.seed {
            Some(seed) => ChaCha8Rng::seed_from_u64(seed),
            None => ChaCha8Rng::from_os_rng(),
        };
        let mut samples = Vec::with_capacity(req.count);
        for n in 0..req.count {
            let c = model.sample_prompt(&mut rng);
            let label = format!("sample-{n}");
            let (image, degraded) = match &session {
                Some(s) if s.schema == *schema && (width, height) == (dw, dh) => {
                    self.render_one(s, &label, &c)?
                }
                _ => {
                    let rr =
                        RenderRequest::for_chromosome(&c, schema, width, height).map_err(|e| {
                            ServiceError::Render {
                                individual: label.clone(),
                                reason: e.to_string(),
                            }
                        })?;
                    let r = ProceduralBackend.generate(&rr, &self.images).map_err(|e| {
                        ServiceError::Render {
                            individual: label.clone(),
                            reason: e.to_string(),
                        }
                    })?;
                    (r, false)
                }
            };
            let prompt = c.to_prompt(schema).expect("sampled chromosomes are valid");
            samples.push(SampleView {
                prompt: prompt.text,
                token_trace: prompt.token_trace,
                image_url: image_url(&image),
                image,
                degraded,
                chromosome: c,
            });
        }
        Ok(SampleResponse {
            api_version: API_VERSION,
            samples,
        })
    }

    pub fn image(&self, hash: &str) -> Result<Image, ServiceError> {
        self.images
            .get(hash)
            .map_err(storage)?
            .ok_or_else(|| ServiceError::ImageNotFound(hash.to_string()))
    }

    /// The committed log of a session, as stored.
    pub fn session_log(&self, id: &str) -> Result<SessionLog, ServiceError> {
        Ok(self.logs.load(id)?)
    }
}

fn population_view(session: &Session, log: &SessionLog, index: Option<u64>) -> PopulationView {
    let record = match index {
        Some(k) => &log.records()[k as usize],
        None => log.last().expect("sessions have a record"),
    };
    PopulationView {
        api_version: API_VERSION,
        session_id: session.id.clone(),
        generation: record.index,
        individuals: record
            .generation
            .individuals
            .iter()
            .map(|i| IndividualView::new(i, &session.schema))
            .collect(),
    }
}
