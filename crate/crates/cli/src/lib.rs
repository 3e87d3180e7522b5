//! Application layer: configuration, persisted student store, ingestion and
//! rendering pipeline, HTTP service and command line.

pub mod cli;
pub mod config;
pub mod pipeline;
pub mod service;
pub mod store;

pub use config::AppConfig;
pub use pipeline::{AppError, Engine, NewStudent};
