//! Session-oriented HTTP service for interactive prompt evolution.
//!
//! [`Engine`] runs the loop (create, view, vote, stats, finalize, sample) on
//! top of the session log and the image store. [`api::router`] exposes it
//! over HTTP/JSON with problem-details errors.

pub mod api;
pub mod config;
pub mod engine;
mod error;
pub mod views;

pub use config::{BackendChoice, SchemaChoice, SessionConfig};
pub use engine::{iteration_rng, Engine, EngineOptions};
pub use error::{Problem, ServiceError};
