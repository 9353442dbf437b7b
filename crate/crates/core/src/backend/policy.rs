//! Tabular autoregressive policy.
//!
//! The policy factorizes a sequence probability as a product of next-token
//! conditionals, `pi(y|x) = prod_k pi(y_k | y_{k-1}, x)`, with one logit row
//! per `(context, previous token)` pair. A pseudo previous-token slot holds
//! the begin-of-sequence position; there is no end token, generation runs
//! to a fixed length so likelihoods stay comparable across triplets.
//!
//! Everything is exact and analytic: log-probabilities come from a stable
//! log-softmax, and the DPO trainer differentiates the same rows in closed
//! form.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BackendError;
use crate::hash::{sha256_hex, StableHasher};
use crate::types::TokenSequence;

/// Logit table of shape `C x (V + 1) x V`; row `V` of the previous-token
/// axis is the begin-of-sequence slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    vocab_size: usize,
    context_size: usize,
    weights: Vec<f64>,
}

/// Per-token log-probabilities and their exact sum (same summation order).
#[derive(Debug, Clone, PartialEq)]
pub struct SeqLogProb {
    pub per_token: Vec<f64>,
    pub total: f64,
}

impl Policy {
    /// Zero-initialized (uniform) policy.
    pub fn uniform(vocab_size: usize, context_size: usize) -> Policy {
        assert!(vocab_size > 0 && context_size > 0);
        Policy {
            vocab_size,
            context_size,
            weights: vec![0.0; context_size * (vocab_size + 1) * vocab_size],
        }
    }

    pub fn with_weights(
        vocab_size: usize,
        context_size: usize,
        weights: Vec<f64>,
    ) -> Result<Policy, BackendError> {
        let expected = context_size * (vocab_size + 1) * vocab_size;
        if weights.len() != expected {
            return Err(BackendError::WeightShape {
                expected,
                actual: weights.len(),
            });
        }
        if let Some(index) = weights.iter().position(|w| !w.is_finite()) {
            return Err(BackendError::NonFiniteWeight { index });
        }
        Ok(Policy {
            vocab_size,
            context_size,
            weights,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn context_size(&self) -> usize {
        self.context_size
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Previous-token row index that addresses begin-of-sequence.
    pub fn bos_slot(&self) -> usize {
        self.vocab_size
    }

    /// Flat index of logit `[context][prev][next]`; `prev == vocab_size`
    /// addresses the begin-of-sequence row.
    pub fn weight_index(&self, context: usize, prev: usize, next: usize) -> usize {
        debug_assert!(prev <= self.vocab_size && next < self.vocab_size);
        (context * (self.vocab_size + 1) + prev) * self.vocab_size + next
    }

    /// Content digest over dimensions and weights; identical weights give
    /// identical ids on every platform.
    pub fn checkpoint_id(&self) -> String {
        let mut bytes =
            Vec::with_capacity(16 + self.weights.len() * std::mem::size_of::<f64>());
        bytes.extend_from_slice(&(self.vocab_size as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.context_size as u64).to_le_bytes());
        for w in &self.weights {
            bytes.extend_from_slice(&w.to_le_bytes());
        }
        sha256_hex(&bytes)
    }

    fn check_context(&self, context: usize) -> Result<(), BackendError> {
        if context >= self.context_size {
            return Err(BackendError::ContextOutOfRange {
                context,
                limit: self.context_size,
            });
        }
        Ok(())
    }

    fn logit_row(&self, context: usize, prev: usize) -> &[f64] {
        let start = (context * (self.vocab_size + 1) + prev) * self.vocab_size;
        &self.weights[start..start + self.vocab_size]
    }

    /// Stable log-softmax over the `(context, prev)` logit row.
    fn log_softmax_row(&self, context: usize, prev: usize) -> Vec<f64> {
        log_softmax(self.logit_row(context, prev))
    }

    /// Next-token probabilities for a `(context, prev)` row at the given
    /// temperature. Temperature zero is handled by the caller (argmax).
    fn prob_row(&self, context: usize, prev: usize, temperature: f64) -> Vec<f64> {
        let row = self.logit_row(context, prev);
        let scaled: Vec<f64> = row.iter().map(|&z| z / temperature).collect();
        let logp = log_softmax(&scaled);
        logp.into_iter().map(f64::exp).collect()
    }

    /// Per-token log-probabilities of `y` under this policy given `context`.
    ///
    /// The total is the left-to-right sum of the per-token values, in that
    /// exact order, so callers can split the sequence anywhere and resume
    /// the same fold without changing the result.
    pub fn seq_logprob(
        &self,
        context: usize,
        y: &TokenSequence,
    ) -> Result<SeqLogProb, BackendError> {
        self.check_context(context)?;
        let mut per_token = Vec::with_capacity(y.len());
        let mut prev = self.vocab_size; // begin-of-sequence slot
        for &token in y.tokens() {
            let token = token as usize;
            if token >= self.vocab_size {
                return Err(BackendError::TokenOutOfRange {
                    token: token as u32,
                    vocab: self.vocab_size,
                });
            }
            let logp = self.log_softmax_row(context, prev)[token];
            per_token.push(logp);
            prev = token;
        }
        let total = per_token.iter().fold(0.0, |acc, &v| acc + v);
        Ok(SeqLogProb { per_token, total })
    }

    /// Ancestral sampling for `max_tokens` steps.
    ///
    /// Logits are divided by the temperature before the softmax; temperature
    /// zero means argmax with lowest-index tie-breaking and consumes no
    /// randomness.
    pub fn generate(
        &self,
        context: usize,
        max_tokens: usize,
        temperature: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<TokenSequence, BackendError> {
        self.check_context(context)?;
        if max_tokens == 0 {
            return Err(BackendError::ZeroMaxTokens);
        }
        if temperature.is_nan() || temperature < 0.0 {
            return Err(BackendError::BadTemperature(temperature));
        }
        let mut tokens = Vec::with_capacity(max_tokens);
        let mut prev = self.vocab_size;
        for _ in 0..max_tokens {
            let next = if temperature == 0.0 {
                argmax(self.logit_row(context, prev))
            } else {
                let probs = self.prob_row(context, prev, temperature);
                sample_index(&probs, rng)
            };
            tokens.push(next as u32);
            prev = next;
        }
        Ok(TokenSequence::new(tokens, self.vocab_size as u32)?)
    }
}

/// Stable hash of concatenated candidate token streams plus the prompt tag,
/// reduced into the context space.
///
/// Order-sensitive by construction: the winner is conditioned on the
/// candidates joined in bank order, so permuting them is a different
/// context.
pub fn toy_context_for_summary(
    candidates: &[&TokenSequence],
    prompt_tag: u64,
    context_size: usize,
) -> Result<usize, BackendError> {
    if candidates.is_empty() {
        return Err(BackendError::EmptyCandidates);
    }
    assert!(context_size > 0);
    let mut h = StableHasher::new();
    for seq in candidates {
        h.write_u64(seq.len() as u64);
        for &t in seq.tokens() {
            h.write_u64(u64::from(t));
        }
    }
    h.write_u64(prompt_tag);
    Ok((h.finish() % context_size as u64) as usize)
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits
        .iter()
        .map(|&z| (z - max).exp())
        .sum::<f64>()
        .ln()
        + max;
    logits.iter().map(|&z| z - log_sum).collect()
}

// Lowest index wins ties, matching the temperature-zero contract.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
