//! Preference-optimization math: Bradley-Terry probabilities, the DPO loss,
//! its analytic gradient for the tabular policy, a plain gradient-descent
//! trainer, and the iterative reference update.
//!
//! The loss per triplet is
//!
//! ```text
//! L = -log sigmoid(beta * ((log pi(y_w|x_w) - log ref(y_w|x_w))
//!                        - (log pi(y_l|x_l) - log ref(y_l|x_l))))
//! ```
//!
//! With policy == reference both log-ratios vanish and L = ln 2 exactly.
//! The gradient distributes `-beta * sigmoid(-margin)` onto the winner-path
//! log-softmax gradients and `+beta * sigmoid(-margin)` onto the loser-path
//! ones; the frozen reference contributes nothing.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::backend::{BackendError, Policy};
use crate::types::TokenSequence;

#[derive(Debug, Error)]
pub enum DpoError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("reward input must be finite")]
    NonFiniteReward,
    #[error("non-finite loss at step {step}")]
    Diverged { step: usize },
    #[error("training requires a non-empty dataset")]
    EmptyDataset,
    #[error("invalid train config: {0}")]
    BadConfig(String),
    #[error("no trained policy available; run a training iteration first")]
    NoTrainedPolicy,
    #[error("policy and reference must share dimensions")]
    DimensionMismatch,
}

/// Default preference-strength parameter.
pub const DEFAULT_BETA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub beta: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: DEFAULT_BETA,
            learning_rate: 0.1,
            steps: 100,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DpoError> {
        if self.beta.is_nan() || self.beta <= 0.0 {
            return Err(DpoError::BadConfig(format!("beta must be > 0, got {}", self.beta)));
        }
        // Zero is allowed: a no-op trainer run is a useful sanity check.
        if self.learning_rate.is_nan() || self.learning_rate < 0.0 {
            return Err(DpoError::BadConfig(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.steps == 0 {
            return Err(DpoError::BadConfig("steps must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(DpoError::BadConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// A triplet in scoreable form: context ids plus token sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTriplet {
    pub context_w: usize,
    pub context_l: usize,
    pub winner: TokenSequence,
    pub loser: TokenSequence,
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Stable softplus, `ln(1 + e^x)`.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Bradley-Terry preference probability `exp(r_w) / (exp(r_w) + exp(r_l))`,
/// computed as `sigmoid(r_w - r_l)` so shifting both rewards by a constant
/// leaves the result bit-identical.
pub fn bt_prob(r_w: f64, r_l: f64) -> Result<f64, DpoError> {
    if !r_w.is_finite() || !r_l.is_finite() {
        return Err(DpoError::NonFiniteReward);
    }
    Ok(sigmoid(r_w - r_l))
}

/// `beta * (policy_logp - reference_logp)`: the implicit reward of `y`.
pub fn implicit_reward_from_logps(policy_logp: f64, reference_logp: f64, beta: f64) -> f64 {
    beta * (policy_logp - reference_logp)
}

/// Implicit reward of `y` given `context`, scored under both models.
pub fn implicit_reward(
    policy: &Policy,
    reference: &Policy,
    context: usize,
    y: &TokenSequence,
    beta: f64,
) -> Result<f64, DpoError> {
    let p = policy.seq_logprob(context, y)?.total;
    let r = reference.seq_logprob(context, y)?.total;
    Ok(implicit_reward_from_logps(p, r, beta))
}

/// Reward margin of a triplet: winner implicit reward minus loser's.
pub fn triplet_margin(
    policy: &Policy,
    reference: &Policy,
    triplet: &EncodedTriplet,
    beta: f64,
) -> Result<f64, DpoError> {
    let w = implicit_reward(policy, reference, triplet.context_w, &triplet.winner, beta)?;
    let l = implicit_reward(policy, reference, triplet.context_l, &triplet.loser, beta)?;
    Ok(w - l)
}

/// `-log sigmoid(margin)`, strictly positive and decreasing in the margin.
pub fn dpo_loss_from_margin(margin: f64) -> f64 {
    softplus(-margin)
}

/// DPO loss of one triplet.
pub fn dpo_loss(
    policy: &Policy,
    reference: &Policy,
    triplet: &EncodedTriplet,
    beta: f64,
) -> Result<f64, DpoError> {
    Ok(dpo_loss_from_margin(triplet_margin(
        policy, reference, triplet, beta,
    )?))
}

/// Mean margin over a batch; positive means the policy prefers winners.
pub fn mean_margin(
    policy: &Policy,
    reference: &Policy,
    batch: &[EncodedTriplet],
    beta: f64,
) -> Result<f64, DpoError> {
    if batch.is_empty() {
        return Err(DpoError::EmptyDataset);
    }
    let mut acc = 0.0;
    for t in batch {
        acc += triplet_margin(policy, reference, t, beta)?;
    }
    Ok(acc / batch.len() as f64)
}

/// Batch loss and gradient in one pass.
#[derive(Debug, Clone)]
pub struct BatchEval {
    pub mean_loss: f64,
    pub mean_margin: f64,
    /// Gradient of the mean loss w.r.t. every policy weight.
    pub grad: Vec<f64>,
}

/// Mean-over-batch analytic gradient of the DPO loss w.r.t. the policy
/// weights. The reference is frozen and contributes no gradient.
pub fn dpo_grad(
    policy: &Policy,
    reference: &Policy,
    batch: &[EncodedTriplet],
    beta: f64,
) -> Result<Vec<f64>, DpoError> {
    Ok(eval_batch(policy, reference, batch, beta)?.grad)
}

/// Scores `batch` and accumulates the gradient in triplet order, so the
/// reduction is bit-reproducible regardless of how scoring is scheduled.
pub fn eval_batch(
    policy: &Policy,
    reference: &Policy,
    batch: &[EncodedTriplet],
    beta: f64,
) -> Result<BatchEval, DpoError> {
    eval_batch_cached(policy, reference, batch, beta, &mut RefCache::default())
}

/// Reference log-prob cache keyed by `(context, tokens)`; the reference is
/// frozen during a training run, so each pair is scored once.
#[derive(Default)]
pub struct RefCache {
    map: HashMap<(usize, Vec<u32>), f64>,
}

impl RefCache {
    fn lookup(
        &mut self,
        reference: &Policy,
        context: usize,
        y: &TokenSequence,
    ) -> Result<f64, DpoError> {
        let key = (context, y.tokens().to_vec());
        if let Some(&v) = self.map.get(&key) {
            return Ok(v);
        }
        let v = reference.seq_logprob(context, y)?.total;
        self.map.insert(key, v);
        Ok(v)
    }
}

fn eval_batch_cached(
    policy: &Policy,
    reference: &Policy,
    batch: &[EncodedTriplet],
    beta: f64,
    cache: &mut RefCache,
) -> Result<BatchEval, DpoError> {
    if batch.is_empty() {
        return Err(DpoError::EmptyDataset);
    }
    if policy.vocab_size() != reference.vocab_size()
        || policy.context_size() != reference.context_size()
    {
        return Err(DpoError::DimensionMismatch);
    }
    let mut grad = vec![0.0; policy.weights().len()];
    let mut loss_acc = 0.0;
    let mut margin_acc = 0.0;
    let inv_n = 1.0 / batch.len() as f64;
    for t in batch {
        let pw = policy.seq_logprob(t.context_w, &t.winner)?.total;
        let pl = policy.seq_logprob(t.context_l, &t.loser)?.total;
        let rw = cache.lookup(reference, t.context_w, &t.winner)?;
        let rl = cache.lookup(reference, t.context_l, &t.loser)?;
        let margin = implicit_reward_from_logps(pw, rw, beta)
            - implicit_reward_from_logps(pl, rl, beta);
        loss_acc += dpo_loss_from_margin(margin);
        margin_acc += margin;
        // dL/dmargin = -sigmoid(-margin); the margin is beta * (winner
        // log-prob - loser log-prob) in the policy terms.
        let coef = beta * sigmoid(-margin) * inv_n;
        accumulate_logprob_grad(policy, t.context_w, &t.winner, -coef, &mut grad);
        accumulate_logprob_grad(policy, t.context_l, &t.loser, coef, &mut grad);
    }
    Ok(BatchEval {
        mean_loss: loss_acc * inv_n,
        mean_margin: margin_acc * inv_n,
        grad,
    })
}

/// Adds `scale * d log pi(y|context) / d theta` into `grad`. For each
/// transition the row gradient is `scale * (indicator(v == y_k) - p_v)`.
fn accumulate_logprob_grad(
    policy: &Policy,
    context: usize,
    y: &TokenSequence,
    scale: f64,
    grad: &mut [f64],
) {
    let vocab = policy.vocab_size();
    let mut prev = policy.bos_slot();
    for &token in y.tokens() {
        let token = token as usize;
        let row_start = policy.weight_index(context, prev, 0);
        let logits = &policy.weights()[row_start..row_start + vocab];
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
        for v in 0..vocab {
            let p = (logits[v] - max).exp() / denom;
            let indicator = if v == token { 1.0 } else { 0.0 };
            grad[row_start + v] += scale * (indicator - p);
        }
        prev = token;
    }
}

/// Trainer output: final weights plus the per-step mean batch loss.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: Policy,
    pub trajectory: Vec<f64>,
}

/// Plain gradient descent over seeded shuffled batches.
///
/// Each step records the mean batch loss at the current weights, then takes
/// one descent step. The batch order reshuffles per epoch from the config
/// seed; given the same seed and config the trajectory is bit-identical.
pub fn train(
    initial: &Policy,
    reference: &Policy,
    data: &[EncodedTriplet],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, DpoError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(DpoError::EmptyDataset);
    }
    let mut policy = initial.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = data.len(); // force an initial shuffle
    let batch_size = cfg.batch_size.min(data.len());
    let mut trajectory = Vec::with_capacity(cfg.steps);
    let mut cache = RefCache::default();
    for step in 0..cfg.steps {
        if cursor + batch_size > data.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let batch: Vec<EncodedTriplet> = order[cursor..cursor + batch_size]
            .iter()
            .map(|&i| data[i].clone())
            .collect();
        cursor += batch_size;
        let eval = eval_batch_cached(&policy, reference, &batch, cfg.beta, &mut cache)?;
        if !eval.mean_loss.is_finite() {
            return Err(DpoError::Diverged { step });
        }
        trajectory.push(eval.mean_loss);
        let weights = policy.weights_mut();
        for (w, g) in weights.iter_mut().zip(eval.grad.iter()) {
            *w -= cfg.learning_rate * g;
        }
    }
    Ok(TrainOutcome { policy, trajectory })
}

/// Holds the frozen reference and the most recently trained policy across
/// iterations of the outer loop.
#[derive(Debug, Clone)]
pub struct IterativeDpo {
    reference: Policy,
    trained: Option<Policy>,
}

impl IterativeDpo {
    pub fn new(initial: Policy) -> Self {
        IterativeDpo {
            reference: initial,
            trained: None,
        }
    }

    pub fn reference(&self) -> &Policy {
        &self.reference
    }

    pub fn trained(&self) -> Option<&Policy> {
        self.trained.as_ref()
    }

    /// Stores the policy trained in the current iteration.
    pub fn complete_iteration(&mut self, trained: Policy) {
        self.trained = Some(trained);
    }

    /// Promotes the trained policy to reference for the next iteration.
    pub fn update_reference(&mut self) -> Result<&Policy, DpoError> {
        let trained = self.trained.take().ok_or(DpoError::NoTrainedPolicy)?;
        self.reference = trained;
        Ok(&self.reference)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::TokenSequence;
    use rand::Rng;

    const LN_2: f64 = std::f64::consts::LN_2;

    fn seq(tokens: &[u32], vocab: u32) -> TokenSequence {
        TokenSequence::new(tokens.to_vec(), vocab).unwrap()
    }

    fn random_policy(vocab: usize, contexts: usize, seed: u64) -> Policy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Policy::uniform(vocab, contexts);
        for w in p.weights_mut() {
            *w = rng.random_range(-1.0..1.0);
        }
        p
    }

    fn random_triplet(vocab: usize, contexts: usize, rng: &mut ChaCha8Rng) -> EncodedTriplet {
        let len_w = rng.random_range(1..=6);
        let len_l = rng.random_range(1..=6);
        let context = rng.random_range(0..contexts);
        let draw = |rng: &mut ChaCha8Rng, len: usize| {
            let tokens: Vec<u32> = (0..len)
                .map(|_| rng.random_range(0..vocab as u32))
                .collect();
            TokenSequence::new(tokens, vocab as u32).unwrap()
        };
        EncodedTriplet {
            context_w: context,
            context_l: context,
            winner: draw(rng, len_w),
            loser: draw(rng, len_l),
        }
    }

    #[test]
    fn bt_prob_identities() {
        assert_eq!(bt_prob(1.3, 1.3).unwrap(), 0.5);
        // Independent scalar sigmoid evaluation of sigma(1).
        assert!((bt_prob(1.0, 0.0).unwrap() - 0.731_058_578_630_004_9).abs() < 1e-6);
        // Shift invariance is exact, not approximate.
        assert_eq!(bt_prob(5.0, 4.0).unwrap(), bt_prob(1.0, 0.0).unwrap());
        assert!(bt_prob(f64::NAN, 0.0).is_err());
        assert!(bt_prob(f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn bt_prob_complement_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let a: f64 = rng.random_range(-30.0..30.0);
            let b: f64 = rng.random_range(-30.0..30.0);
            let p = bt_prob(a, b).unwrap();
            let q = bt_prob(b, a).unwrap();
            assert!((p + q - 1.0).abs() < 1e-12);
        }
        // Strict openness holds before f64 saturation (|diff| < ~36).
        for _ in 0..200 {
            let a: f64 = rng.random_range(-15.0..15.0);
            let b: f64 = rng.random_range(-15.0..15.0);
            let p = bt_prob(a, b).unwrap();
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn implicit_reward_identities() {
        let p = random_policy(8, 4, 1);
        let y = seq(&[1, 2, 3], 8);
        assert_eq!(implicit_reward(&p, &p, 0, &y, 0.1).unwrap(), 0.0);
        let q = random_policy(8, 4, 2);
        assert_eq!(implicit_reward(&p, &q, 0, &y, 0.0).unwrap(), 0.0);
        // Hand-set log-probs.
        assert!((implicit_reward_from_logps(-1.0, -2.0, 0.1) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn loss_is_ln2_at_policy_equals_reference() {
        let p = random_policy(16, 8, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let t = random_triplet(16, 8, &mut rng);
            let loss = dpo_loss(&p, &p, &t, 0.1).unwrap();
            assert!((loss - LN_2).abs() < 1e-9);
        }
    }

    #[test]
    fn loss_scalar_oracle_and_complement() {
        // Margin 0.2: loss = ln(1 + e^-0.2), frozen from an independent
        // evaluation.
        assert!((dpo_loss_from_margin(0.2) - 0.598_138_869_381_591_8).abs() < 1e-6);
        assert!((dpo_loss_from_margin(-0.2) - 0.798_138_869_381_591_8).abs() < 1e-6);
        let sum = (-dpo_loss_from_margin(0.2)).exp() + (-dpo_loss_from_margin(-0.2)).exp();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn swapping_winner_and_loser_complements_the_loss() {
        let policy = random_policy(8, 4, 7);
        let reference = random_policy(8, 4, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let t = random_triplet(8, 4, &mut rng);
            let swapped = EncodedTriplet {
                context_w: t.context_l,
                context_l: t.context_w,
                winner: t.loser.clone(),
                loser: t.winner.clone(),
            };
            let a = dpo_loss(&policy, &reference, &t, 0.1).unwrap();
            let b = dpo_loss(&policy, &reference, &swapped, 0.1).unwrap();
            assert!(((-a).exp() + (-b).exp() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn loss_decreases_in_winner_logprob() {
        // Raising the winner's path logit (holding everything else fixed)
        // must strictly decrease the loss.
        let reference = random_policy(8, 4, 10);
        let mut policy = reference.clone();
        let t = EncodedTriplet {
            context_w: 1,
            context_l: 1,
            winner: seq(&[2], 8),
            loser: seq(&[5], 8),
        };
        let base = dpo_loss(&policy, &reference, &t, 0.1).unwrap();
        let idx = policy.weight_index(1, policy.bos_slot(), 2);
        policy.weights_mut()[idx] += 0.5;
        let raised = dpo_loss(&policy, &reference, &t, 0.1).unwrap();
        assert!(raised < base);
    }

    #[test]
    fn grad_is_zero_for_symmetric_triplets_and_beta_zero() {
        let p = random_policy(8, 4, 11);
        let t = EncodedTriplet {
            context_w: 2,
            context_l: 2,
            winner: seq(&[1, 4], 8),
            loser: seq(&[1, 4], 8),
        };
        let g = dpo_grad(&p, &p, std::slice::from_ref(&t), 0.1).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));

        let q = random_policy(8, 4, 12);
        let t2 = EncodedTriplet {
            context_w: 0,
            context_l: 1,
            winner: seq(&[3], 8),
            loser: seq(&[6, 2], 8),
        };
        let g2 = dpo_grad(&p, &q, &[t2], 0.0).unwrap();
        assert!(g2.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grad_matches_central_finite_differences() {
        let vocab = 6;
        let contexts = 3;
        let reference = random_policy(vocab, contexts, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for state in 0..10 {
            let policy = random_policy(vocab, contexts, 100 + state);
            let batch: Vec<EncodedTriplet> = (0..4)
                .map(|_| random_triplet(vocab, contexts, &mut rng))
                .collect();
            let analytic = dpo_grad(&policy, &reference, &batch, 0.1).unwrap();
            let mean_loss = |p: &Policy| -> f64 {
                batch
                    .iter()
                    .map(|t| dpo_loss(p, &reference, t, 0.1).unwrap())
                    .sum::<f64>()
                    / batch.len() as f64
            };
            // Probe coordinates on rows the batch actually visits, plus a
            // few arbitrary ones (both sides should be ~0 there).
            for probe in 0..12 {
                let idx = if probe < 10 {
                    let t = &batch[probe % batch.len()];
                    let k = probe % t.winner.len();
                    let prev = if k == 0 {
                        policy.bos_slot()
                    } else {
                        t.winner.tokens()[k - 1] as usize
                    };
                    policy.weight_index(t.context_w, prev, probe % vocab)
                } else {
                    rng.random_range(0..analytic.len())
                };
                let h = 1e-4;
                let mut plus = policy.clone();
                plus.weights_mut()[idx] += h;
                let mut minus = policy.clone();
                minus.weights_mut()[idx] -= h;
                let fd = (mean_loss(&plus) - mean_loss(&minus)) / (2.0 * h);
                let a = analytic[idx];
                let denom = a.abs().max(fd.abs()).max(1e-10);
                assert!(
                    (a - fd).abs() / denom <= 1e-4 || (a.abs() < 1e-12 && fd.abs() < 1e-9),
                    "state {state} idx {idx}: analytic {a} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn one_small_step_decreases_batch_loss() {
        let reference = random_policy(8, 4, 31);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for trial in 0..10 {
            let policy = random_policy(8, 4, 200 + trial);
            let batch: Vec<EncodedTriplet> = (0..8)
                .map(|_| random_triplet(8, 4, &mut rng))
                .collect();
            let eval = eval_batch(&policy, &reference, &batch, 0.1).unwrap();
            let grad_norm: f64 = eval.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if grad_norm < 1e-9 {
                continue;
            }
            let mut stepped = policy.clone();
            for (w, g) in stepped.weights_mut().iter_mut().zip(eval.grad.iter()) {
                *w -= 1e-2 * g;
            }
            let after = eval_batch(&stepped, &reference, &batch, 0.1).unwrap();
            assert!(
                after.mean_loss < eval.mean_loss,
                "trial {trial}: {} !< {}",
                after.mean_loss,
                eval.mean_loss
            );
        }
    }

    #[test]
    fn train_zero_learning_rate_changes_nothing() {
        let p = random_policy(8, 4, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let data: Vec<EncodedTriplet> =
            (0..16).map(|_| random_triplet(8, 4, &mut rng)).collect();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            steps: 20,
            ..TrainConfig::default()
        };
        let out = train(&p, &p, &data, &cfg).unwrap();
        assert_eq!(out.policy, p);
        for &loss in &out.trajectory {
            assert!((loss - LN_2).abs() < 1e-12);
        }
        assert!(matches!(
            train(
                &p,
                &p,
                &data,
                &TrainConfig {
                    learning_rate: -0.1,
                    ..TrainConfig::default()
                }
            ),
            Err(DpoError::BadConfig(_))
        ));
    }

    #[test]
    fn train_is_deterministic_and_learns() {
        let initial = Policy::uniform(16, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let data: Vec<EncodedTriplet> = (0..64)
            .filter_map(|_| {
                let t = random_triplet(16, 8, &mut rng);
                (t.winner != t.loser).then_some(t)
            })
            .collect();
        let cfg = TrainConfig {
            beta: 0.1,
            learning_rate: 0.5,
            steps: 50,
            batch_size: 64,
            seed: 7,
        };
        let a = train(&initial, &initial, &data, &cfg).unwrap();
        let b = train(&initial, &initial, &data, &cfg).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.policy, b.policy);
        assert!((a.trajectory[0] - LN_2).abs() < 1e-12);
        assert!(*a.trajectory.last().unwrap() < LN_2);
        assert!(mean_margin(&a.policy, &initial, &data, 0.1).unwrap() > 0.0);
    }

    #[test]
    fn reference_update_lifecycle() {
        let initial = Policy::uniform(4, 2);
        let mut state = IterativeDpo::new(initial.clone());
        assert!(matches!(
            state.update_reference(),
            Err(DpoError::NoTrainedPolicy)
        ));
        let mut trained = initial.clone();
        trained.weights_mut()[0] = 0.5;
        let trained_id = trained.checkpoint_id();
        state.complete_iteration(trained);
        state.update_reference().unwrap();
        assert_eq!(state.reference().checkpoint_id(), trained_id);
        // A second update without training in between must fail again.
        assert!(matches!(
            state.update_reference(),
            Err(DpoError::NoTrainedPolicy)
        ));
    }
}
