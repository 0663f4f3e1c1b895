use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use promptsteer_cli::files::{load_chromosome, load_config};
use promptsteer_cli::{simulate, SimConfig};
use promptsteer_core::analytics::LogStore;
use promptsteer_core::{Chromosome, OptimizedPromptingModel};
use promptsteer_render::{compose, to_svg, ImageStore, RemoteConfig, RenderRequest};
use promptsteer_service::{api, BackendChoice, Engine, EngineOptions, SessionConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(
    name = "promptsteer",
    version,
    about = "Evolve text-to-image prompts from votes"
)]
struct Cli {
    /// Session config (TOML or JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    backend: Option<Backend>,
    /// Base URL of an A1111-compatible server.
    #[arg(long, global = true)]
    remote_url: Option<String>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Procedural,
    Remote,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, default_value = "promptsteer-data")]
        data_dir: PathBuf,
        /// Directory served for paths outside the API.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Seconds before an idle session is dropped from memory.
        #[arg(long, default_value_t = 24 * 60 * 60)]
        idle_ttl: u64,
    },
    /// Render one chromosome to PNG, or SVG when --out ends in .svg.
    Render {
        /// Chromosome file; a random one from --seed when absent.
        #[arg(long)]
        chromosome: Option<PathBuf>,
        #[arg(long)]
        width: Option<u32>,
        #[arg(long)]
        height: Option<u32>,
    },
    /// Convergence experiment with simulated users.
    Simulate {
        #[arg(long, default_value_t = 5)]
        iterations: u64,
        #[arg(long, default_value_t = 50)]
        runs: usize,
        /// Canvas side for the procedural renders; 0 skips rendering.
        #[arg(long, default_value_t = 512)]
        canvas: u32,
        /// Votes for the best, second best, ... individual.
        #[arg(long, value_delimiter = ',', default_value = "4,3,2,1")]
        schedule: Vec<u64>,
    },
    /// Freeze the preferences of a session log into a model document.
    ExportModel {
        /// Session log file (`<id>.jsonl`).
        #[arg(long)]
        log: PathBuf,
    },
    /// Generate prompts and images from a model document.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 512)]
        size: u32,
    },
}

impl Cli {
    fn session_config(&self) -> Result<SessionConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => SessionConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.master_seed = Some(seed);
        }
        match (self.backend, &self.remote_url) {
            (Some(Backend::Procedural), _) => cfg.backend = BackendChoice::Procedural,
            (Some(Backend::Remote), Some(url)) => {
                cfg.backend = BackendChoice::Remote(RemoteConfig::new(url))
            }
            (Some(Backend::Remote), None) => match &mut cfg.backend {
                BackendChoice::Remote(_) => {}
                _ => bail!("--backend remote needs --remote-url or a remote backend in --config"),
            },
            (None, Some(url)) => {
                if let BackendChoice::Remote(r) = &mut cfg.backend {
                    r.base_url = url.clone();
                } else {
                    cfg.backend = BackendChoice::Remote(RemoteConfig::new(url));
                }
            }
            (None, None) => {}
        }
        Ok(cfg)
    }
}

fn write_out(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Serve {
            addr,
            data_dir,
            static_dir,
            idle_ttl,
        } => {
            let engine = Engine::open(EngineOptions {
                idle_ttl: Duration::from_secs(*idle_ttl),
                ..EngineOptions::new(data_dir)
            })?;
            let rt = tokio::runtime::Runtime::new()?;
            let engine = Arc::new(engine);
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                api::serve(engine, listener, static_dir.clone()).await
            })?;
        }
        Command::Render {
            chromosome,
            width,
            height,
        } => {
            let cfg = cli.session_config()?;
            let schema = cfg.validate()?;
            let c = match chromosome {
                Some(path) => load_chromosome(path, &schema)?,
                None => Chromosome::random(
                    &schema,
                    &mut ChaCha8Rng::seed_from_u64(cfg.master_seed.unwrap_or(0)),
                ),
            };
            let (w, h) = (width.unwrap_or(cfg.width), height.unwrap_or(cfg.height));
            let out = cli.out.as_deref();
            if out.is_some_and(|p| p.extension().is_some_and(|e| e == "svg")) {
                let svg = to_svg(&compose(&c, w, h)?);
                write_out(out, svg.as_bytes())?;
            } else {
                if out.is_none() {
                    bail!("--out is required for raster output");
                }
                let req = RenderRequest::for_chromosome(&c, &schema, w, h)?
                    .with_params(cfg.backend_params.clone());
                let store = ImageStore::memory();
                let r = cfg.backend.build().generate(&req, &store)?;
                let img = store.get(&r.id)?.expect("just stored");
                write_out(out, &img.bytes)?;
                eprintln!(
                    "{} ({} bytes, {})",
                    req.prompt.text, r.byte_len, r.media_type
                );
            }
        }
        Command::Simulate {
            iterations,
            runs,
            canvas,
            schedule,
        } => {
            let cfg = cli.session_config()?;
            let schema = cfg.validate()?;
            if schedule.iter().sum::<u64>() == 0 {
                bail!("the vote schedule must hand out at least one vote");
            }
            let sim = SimConfig {
                schema,
                params: cfg.params(),
                runs: *runs,
                iterations: *iterations,
                master_seed: cfg.master_seed.unwrap_or(0),
                canvas: (*canvas > 0).then_some((*canvas, *canvas)),
                schedule: schedule.clone(),
                ..SimConfig::default()
            };
            let started = std::time::Instant::now();
            let report = simulate(&sim);
            print!("{}", report.table());
            eprintln!(
                "{} runs x {} iterations in {:.2?}",
                runs,
                iterations,
                started.elapsed()
            );
            if let Some(out) = &cli.out {
                fs::write(out, serde_json::to_string_pretty(&report)?)
                    .with_context(|| format!("writing {}", out.display()))?;
            }
        }
        Command::ExportModel { log } => {
            let dir = log.parent().unwrap_or(Path::new("."));
            let id = log
                .file_stem()
                .and_then(|s| s.to_str())
                .context("log file name is not a session id")?;
            let session = LogStore::open(dir)?.load(id)?;
            let state = session
                .current_state()
                .context("session log has no records")?;
            let model = OptimizedPromptingModel::export(&state, &session.header().schema, id)?;
            write_out(cli.out.as_deref(), model.to_document().as_bytes())?;
        }
        Command::Sample { model, count, size } => {
            let cfg = cli.session_config()?;
            let text = fs::read_to_string(model)
                .with_context(|| format!("reading {}", model.display()))?;
            let model = OptimizedPromptingModel::from_document(&text)?;
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("samples"));
            fs::create_dir_all(&out)?;
            let backend = cfg.backend.build();
            let store = ImageStore::memory();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed.unwrap_or(0));
            let mut listing = Vec::new();
            for n in 0..*count {
                let c = model.sample_prompt(&mut rng);
                let req = RenderRequest::for_chromosome(&c, model.schema(), *size, *size)?
                    .with_params(cfg.backend_params.clone());
                let r = backend.generate(&req, &store)?;
                let img = store.get(&r.id)?.expect("just stored");
                let ext = if r.media_type == "image/png" {
                    "png"
                } else {
                    "img"
                };
                let file = format!("sample-{n:03}.{ext}");
                fs::write(out.join(&file), &img.bytes)?;
                println!("{file}\t{}", req.prompt.text);
                listing.push(serde_json::json!({
                    "file": file,
                    "prompt": req.prompt.text,
                    "chromosome": c,
                    "image": r,
                }));
            }
            fs::write(
                out.join("samples.json"),
                serde_json::to_string_pretty(&listing)?,
            )?;
        }
    }
    Ok(())
}
