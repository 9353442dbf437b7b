//! Shared fixture builders for the benchmark targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shape_core::dpo::EncodedTriplet;
use shape_core::{ImageTensor, Policy, TokenSequence};

/// Policy with pseudo-random weights in `[-1, 1)`.
pub fn random_policy(vocab: usize, contexts: usize, seed: u64) -> Policy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = Policy::uniform(vocab, contexts);
    for w in policy.weights_mut() {
        *w = rng.random_range(-1.0..1.0);
    }
    policy
}

/// Batch of random triplets sharing the policy's dimensions.
pub fn random_triplets(
    vocab: usize,
    contexts: usize,
    count: usize,
    seed: u64,
) -> Vec<EncodedTriplet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fn draw(rng: &mut ChaCha8Rng, vocab: usize, len: usize) -> TokenSequence {
        let tokens: Vec<u32> = (0..len)
            .map(|_| rng.random_range(0..vocab as u32))
            .collect();
        TokenSequence::new(tokens, vocab as u32).unwrap()
    }
    (0..count)
        .map(|_| {
            let context = rng.random_range(0..contexts);
            let len_w = 4 + rng.random_range(0..4usize);
            let len_l = 4 + rng.random_range(0..4usize);
            EncodedTriplet {
                context_w: context,
                context_l: context,
                winner: draw(&mut rng, vocab, len_w),
                loser: draw(&mut rng, vocab, len_l),
            }
        })
        .collect()
}

/// Pseudo-random RGB image with values in `[0, 1]`.
pub fn random_image(height: usize, width: usize, seed: u64) -> ImageTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..height * width * 3)
        .map(|_| rng.random_range(0.0..=1.0))
        .collect();
    ImageTensor::new(height, width, 3, data).unwrap()
}
