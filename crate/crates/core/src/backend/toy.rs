//! Toy backend: drives the tabular [`Policy`] through the [`Backend`]
//! interface.
//!
//! Images collapse to context ids here. A sample carrying a toy-context id
//! uses it directly (mod the context space); anything else hashes the sample
//! id. An augmented input maps to a derived context, standing in for "the
//! model sees a perturbed image". Generated token sequences are rendered as
//! whitespace-joined decimal ids, so the whitespace token count of the text
//! equals the sequence length.

use rand_chacha::ChaCha8Rng;

use super::policy::{toy_context_for_summary, Policy};
use super::{Backend, BackendError};
use crate::augment::AugmentationSpec;
use crate::hash::{fnv1a64, StableHasher};
use crate::types::{Sample, SampleImage, TokenSequence};

pub struct ToyBackend {
    policy: Policy,
    max_tokens: usize,
    temperature: f64,
}

impl ToyBackend {
    pub fn new(policy: Policy, max_tokens: usize, temperature: f64) -> Result<Self, BackendError> {
        if max_tokens == 0 {
            return Err(BackendError::ZeroMaxTokens);
        }
        if temperature.is_nan() || temperature < 0.0 {
            return Err(BackendError::BadTemperature(temperature));
        }
        Ok(ToyBackend {
            policy,
            max_tokens,
            temperature,
        })
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    fn augmented_context(&self, base: usize, index: usize, spec: &AugmentationSpec) -> usize {
        let mut h = StableHasher::new();
        h.write_u64(base as u64);
        h.write_u64(index as u64);
        h.write_str(&spec.name());
        (h.finish() % self.policy.context_size() as u64) as usize
    }
}

/// Context id for a sample: toy-context ids map directly (mod the context
/// space); other image representations hash the sample id.
pub fn toy_context_for_sample(sample: &Sample, context_size: usize) -> usize {
    match sample.image {
        SampleImage::ToyContext(id) => (id % context_size as u64) as usize,
        _ => (fnv1a64(sample.id.as_bytes()) % context_size as u64) as usize,
    }
}

/// Renders a token sequence as whitespace-joined decimal ids.
pub fn render_tokens(seq: &TokenSequence) -> String {
    seq.tokens()
        .iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Inverse of [`render_tokens`], tolerant of arbitrary text: decimal tokens
/// within the vocabulary parse directly, anything else hashes into it.
pub fn encode_text(text: &str, vocab_size: u32) -> Result<TokenSequence, BackendError> {
    let tokens: Vec<u32> = text
        .split_whitespace()
        .map(|word| match word.parse::<u32>() {
            Ok(t) if t < vocab_size => t,
            _ => (fnv1a64(word.as_bytes()) % u64::from(vocab_size)) as u32,
        })
        .collect();
    Ok(TokenSequence::new(tokens, vocab_size)?)
}

impl Backend for ToyBackend {
    fn answer(
        &self,
        sample: &Sample,
        augmentation: Option<(usize, &AugmentationSpec)>,
        rng: &mut ChaCha8Rng,
    ) -> Result<String, BackendError> {
        let base = toy_context_for_sample(sample, self.policy.context_size());
        let context = match augmentation {
            None => base,
            Some((index, spec)) => self.augmented_context(base, index, spec),
        };
        let seq = self
            .policy
            .generate(context, self.max_tokens, self.temperature, rng)?;
        Ok(render_tokens(&seq))
    }

    fn summarize(
        &self,
        candidates: &[String],
        prompt: &str,
        rng: &mut ChaCha8Rng,
    ) -> Result<String, BackendError> {
        if candidates.is_empty() {
            return Err(BackendError::EmptyCandidates);
        }
        let vocab = self.policy.vocab_size() as u32;
        let sequences: Vec<TokenSequence> = candidates
            .iter()
            .map(|c| encode_text(c, vocab))
            .collect::<Result<_, _>>()?;
        let refs: Vec<&TokenSequence> = sequences.iter().collect();
        let prompt_tag = fnv1a64(prompt.as_bytes());
        let context =
            toy_context_for_summary(&refs, prompt_tag, self.policy.context_size())?;
        let seq = self
            .policy
            .generate(context, self.max_tokens, self.temperature, rng)?;
        Ok(render_tokens(&seq))
    }
}
