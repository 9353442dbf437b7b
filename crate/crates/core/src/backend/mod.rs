//! Answer generators: the toy differentiable policy, a remote
//! chat-completions client, and a deterministic mock.
//!
//! The forge talks to all of them through the [`Backend`] trait: `answer`
//! produces a response for a (possibly augmented) sample, `summarize`
//! consolidates candidate answers under a prompt.

mod mock;
mod policy;
mod remote;
mod toy;

pub use mock::MockBackend;
pub use policy::{toy_context_for_summary, Policy, SeqLogProb};
pub use remote::{RemoteBackend, RemoteClient, RemoteConfig, RemoteReply, API_KEY_ENV};
pub use toy::{encode_text, render_tokens, toy_context_for_sample, ToyBackend};

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::augment::{AugmentError, AugmentationSpec};
use crate::types::{Sample, TypeError};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("context {context} out of range (context space {limit})")]
    ContextOutOfRange { context: usize, limit: usize },
    #[error("token {token} out of range (vocabulary {vocab})")]
    TokenOutOfRange { token: u32, vocab: usize },
    #[error("weight array has wrong length: expected {expected}, got {actual}")]
    WeightShape { expected: usize, actual: usize },
    #[error("non-finite weight at index {index}")]
    NonFiniteWeight { index: usize },
    #[error("candidate list must be non-empty")]
    EmptyCandidates,
    #[error("question must be non-empty")]
    EmptyQuestion,
    #[error("temperature must be >= 0, got {0}")]
    BadTemperature(f64),
    #[error("max_tokens must be >= 1")]
    ZeroMaxTokens,
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error("sample {sample_id} has no pixel data for the remote backend")]
    MissingImage { sample_id: String },
    #[error("failed to encode image: {0}")]
    ImageEncode(String),
    #[error("invalid remote config: {0}")]
    BadRemoteConfig(String),
    #[error("http {status} after {attempts} attempt(s): {message}")]
    Http {
        status: u16,
        attempts: u32,
        message: String,
    },
    #[error("request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("timed out after {timeout_ms} ms (attempt {attempts})")]
    Timeout { timeout_ms: u64, attempts: u32 },
    #[error("malformed response body after {attempts} attempt(s): {message}")]
    MalformedResponse { attempts: u32, message: String },
}

/// Anything that can answer questions about samples and summarize
/// candidate answers.
pub trait Backend: Send + Sync {
    /// Answers `sample`'s question. When `augmentation` is given, the
    /// answer is produced from the correspondingly perturbed input; the
    /// index is the spec's position in the bank.
    fn answer(
        &self,
        sample: &Sample,
        augmentation: Option<(usize, &AugmentationSpec)>,
        rng: &mut ChaCha8Rng,
    ) -> Result<String, BackendError>;

    /// Consolidates candidate answers into one response under `prompt`.
    fn summarize(
        &self,
        candidates: &[String],
        prompt: &str,
        rng: &mut ChaCha8Rng,
    ) -> Result<String, BackendError>;
}
