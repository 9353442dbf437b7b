//! Deterministic mock backend for tests and golden files.
//!
//! Answers are pure functions of (sample id, augmentation label); summaries
//! are pure functions of the candidate texts and prompt. Explicit responses
//! can be pinned per key for structured tests.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

use super::{Backend, BackendError};
use crate::augment::AugmentationSpec;
use crate::hash::StableHasher;
use crate::types::Sample;

/// Key under which an original (unaugmented) answer is stored.
pub const ORIGINAL_KEY: &str = "original";

#[derive(Debug, Default, Clone)]
pub struct MockBackend {
    /// Pinned answers keyed by `(sample_id, augmentation label)`.
    answers: BTreeMap<(String, String), String>,
    /// Pinned summaries keyed by the joined candidate texts.
    summaries: BTreeMap<String, String>,
    /// When set, `answer` fails for this sample id.
    fail_sample: Option<String>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_answer(
        mut self,
        sample_id: &str,
        augmentation: &str,
        text: &str,
    ) -> Self {
        self.answers
            .insert((sample_id.to_string(), augmentation.to_string()), text.to_string());
        self
    }

    pub fn with_summary(mut self, candidates_key: &str, text: &str) -> Self {
        self.summaries
            .insert(candidates_key.to_string(), text.to_string());
        self
    }

    /// Makes `answer` fail for the given sample id, for failure-policy tests.
    pub fn failing_on(mut self, sample_id: &str) -> Self {
        self.fail_sample = Some(sample_id.to_string());
        self
    }

    fn words_from(tag: &str, material: &[&str], count: usize) -> String {
        let mut h = StableHasher::new();
        h.write_str(tag);
        for m in material {
            h.write_str(m);
        }
        let mut state = h.finish();
        let mut words = Vec::with_capacity(count);
        for _ in 0..count {
            state = crate::hash::splitmix64(state);
            words.push(format!("w{}", state % 997));
        }
        words.join(" ")
    }
}

impl Backend for MockBackend {
    fn answer(
        &self,
        sample: &Sample,
        augmentation: Option<(usize, &AugmentationSpec)>,
        _rng: &mut ChaCha8Rng,
    ) -> Result<String, BackendError> {
        if self.fail_sample.as_deref() == Some(sample.id.as_str()) {
            return Err(BackendError::MissingImage {
                sample_id: sample.id.clone(),
            });
        }
        let label = match augmentation {
            None => ORIGINAL_KEY.to_string(),
            Some((_, spec)) => spec.name(),
        };
        if let Some(text) = self.answers.get(&(sample.id.clone(), label.clone())) {
            return Ok(text.clone());
        }
        Ok(Self::words_from("answer", &[&sample.id, &label, &sample.question], 5))
    }

    fn summarize(
        &self,
        candidates: &[String],
        prompt: &str,
        _rng: &mut ChaCha8Rng,
    ) -> Result<String, BackendError> {
        if candidates.is_empty() {
            return Err(BackendError::EmptyCandidates);
        }
        let key = candidates.join("\n");
        if let Some(text) = self.summaries.get(&key) {
            return Ok(text.clone());
        }
        let material: Vec<&str> = candidates
            .iter()
            .map(String::as_str)
            .chain(std::iter::once(prompt))
            .collect();
        Ok(Self::words_from("summary", &material, 7))
    }
}
