//! Subcommand implementations.

pub mod augment;
pub mod eval;
pub mod forge;
pub mod report;
pub mod train;

use anyhow::Result;
use shape_core::backend::{
    Backend, MockBackend, Policy, RemoteBackend, RemoteClient, ToyBackend,
};

use crate::config::{AppConfig, BackendKind};

/// Command-line error that should exit with the usage code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

/// Builds the configured backend; the toy backend starts from a uniform
/// policy with the configured dimensions.
pub fn make_backend(cfg: &AppConfig) -> Result<Box<dyn Backend>> {
    Ok(match cfg.backend.kind {
        BackendKind::Mock => Box::new(MockBackend::new()),
        BackendKind::Toy => Box::new(ToyBackend::new(
            Policy::uniform(cfg.model.vocab_size, cfg.model.context_size),
            cfg.generation.max_tokens,
            cfg.generation.temperature,
        )?),
        BackendKind::Remote => Box::new(RemoteBackend::new(RemoteClient::new(
            cfg.backend.remote_config()?,
        )?)),
    })
}

/// Prints either the JSON document or the plain lines, depending on the
/// global `--json` flag.
pub fn emit(json: bool, doc: &serde_json::Value, lines: &[String]) {
    if json {
        println!("{}", serde_json::to_string_pretty(doc).expect("serializable"));
    } else {
        for line in lines {
            println!("{line}");
        }
    }
}
