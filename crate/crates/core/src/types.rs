//! Shared domain types: samples, candidate answers, preference triplets,
//! and token sequences.
//!
//! All of these are immutable after construction and safe to share across
//! threads. Token counts are whitespace-delimited segment counts of the
//! trimmed text; no model tokenizer is involved.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::ImageTensor;

#[derive(Debug, Error, PartialEq)]
pub enum TypeError {
    #[error("sample id must be non-empty")]
    EmptySampleId,
    #[error("token sequence must be non-empty")]
    EmptyTokenSequence,
    #[error("token {token} out of vocabulary bounds (vocab size {vocab_size})")]
    TokenOutOfBounds { token: u32, vocab_size: u32 },
    #[error("vocabulary size must be positive")]
    ZeroVocab,
    #[error("preference triplet requires a non-empty candidate list")]
    NoCandidates,
    #[error("preference triplet winner and loser must be non-empty")]
    EmptyAnswer,
    #[error("preference triplet iteration must be >= 1, got {iteration}")]
    BadIteration { iteration: u32 },
}

/// Number of whitespace-delimited tokens in `text` after trimming.
pub fn whitespace_token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// The image half of an input: inline pixels, a file reference, or a
/// toy-context id standing in for an image on the toy backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SampleImage {
    Tensor(ImageTensor),
    Path(String),
    ToyContext(u64),
}

/// One input pair: an image representation plus its question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub image: SampleImage,
    pub question: String,
}

impl Sample {
    pub fn new(id: impl Into<String>, image: SampleImage, question: impl Into<String>) -> Result<Self, TypeError> {
        let id = id.into();
        if id.is_empty() {
            return Err(TypeError::EmptySampleId);
        }
        Ok(Sample {
            id,
            image,
            question: question.into(),
        })
    }
}

/// One answer generated from an augmented input, tagged with the
/// augmentation that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateAnswer {
    pub augmentation_name: String,
    pub text: String,
    pub token_count: usize,
}

impl CandidateAnswer {
    pub fn new(augmentation_name: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let token_count = whitespace_token_count(&text);
        CandidateAnswer {
            augmentation_name: augmentation_name.into(),
            text,
            token_count,
        }
    }
}

/// A winner/loser pair plus the candidates and prompt that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceTriplet {
    pub sample_id: String,
    pub iteration: u32,
    pub question: String,
    pub winner: String,
    pub loser: String,
    pub candidates: Vec<CandidateAnswer>,
    pub prompt: String,
}

impl PreferenceTriplet {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        sample_id: impl Into<String>,
        iteration: u32,
        question: impl Into<String>,
        winner: impl Into<String>,
        loser: impl Into<String>,
        candidates: Vec<CandidateAnswer>,
        prompt: impl Into<String>,
    ) -> Result<Self, TypeError> {
        if iteration == 0 {
            return Err(TypeError::BadIteration { iteration });
        }
        if candidates.is_empty() {
            return Err(TypeError::NoCandidates);
        }
        let winner = winner.into();
        let loser = loser.into();
        if winner.is_empty() || loser.is_empty() {
            return Err(TypeError::EmptyAnswer);
        }
        Ok(PreferenceTriplet {
            sample_id: sample_id.into(),
            iteration,
            question: question.into(),
            winner,
            loser,
            candidates,
            prompt: prompt.into(),
        })
    }

    /// Degenerate triplets carry no preference signal but are kept by
    /// default; the forge counts them.
    pub fn is_degenerate(&self) -> bool {
        self.winner == self.loser
    }
}

/// A non-empty sequence of token ids, each within the vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence {
    tokens: Vec<u32>,
    vocab_size: u32,
}

impl TokenSequence {
    pub fn new(tokens: Vec<u32>, vocab_size: u32) -> Result<Self, TypeError> {
        if vocab_size == 0 {
            return Err(TypeError::ZeroVocab);
        }
        if tokens.is_empty() {
            return Err(TypeError::EmptyTokenSequence);
        }
        if let Some(&token) = tokens.iter().find(|&&t| t >= vocab_size) {
            return Err(TypeError::TokenOutOfBounds { token, vocab_size });
        }
        Ok(TokenSequence { tokens, vocab_size })
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}
