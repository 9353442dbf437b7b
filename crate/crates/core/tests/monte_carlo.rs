//! Monte-Carlo oracles for the diffusion augmentation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shape_core::augment::{build_schedule, diffuse, diffuse_raw};
use shape_core::ImageTensor;

// Frozen from an independent high-precision cumulative-product evaluation
// of the default schedule (T=1000, beta linear in [1e-4, 0.02]).
const ALPHA_BAR_200: f64 = 0.659_038_508_231_794_1;

#[test]
fn diffusion_mean_matches_process_mean_at_t200() {
    // Mid-gray image; mean over 10^4 raw draws of the per-pixel means must
    // land within 3 sigma / 100 of sqrt(alpha_bar) * 0.5. The bound is the
    // per-pixel standard error at 10^4 draws; averaging over pixels only
    // tightens the statistic it is applied to. Raw (pre-clamp) values are
    // used because at t=200 the noise scale makes boundary clipping a
    // first-order bias, not a negligible one.
    let schedule = build_schedule(1000, 1e-4, 0.02).unwrap();
    let img = ImageTensor::constant(32, 32, 1, 0.5).unwrap();
    let draws = 10_000usize;
    let pixels = 32 * 32;
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_200);
    let mut sums = vec![0.0f64; pixels];
    for _ in 0..draws {
        let raw = diffuse_raw(&img, 200, &schedule, &mut rng).unwrap();
        for (s, v) in sums.iter_mut().zip(raw.iter()) {
            *s += v;
        }
    }
    let grand_mean = sums.iter().map(|s| s / draws as f64).sum::<f64>() / pixels as f64;

    let target = ALPHA_BAR_200.sqrt() * 0.5;
    let sigma = (1.0 - ALPHA_BAR_200).sqrt();
    let bound = 3.0 * sigma / (draws as f64).sqrt();
    assert!(
        (grand_mean - target).abs() < bound,
        "grand mean {grand_mean} vs target {target} (bound {bound})"
    );
}

#[test]
fn diffusion_at_final_step_decorrelates_from_input() {
    // Structured (ramp) input; pooled sample correlation between input and
    // clamped output over 10^4 draws must fall below 0.05.
    let schedule = build_schedule(1000, 1e-4, 0.02).unwrap();
    let pixels = 32 * 32;
    let data: Vec<f64> = (0..pixels).map(|i| i as f64 / (pixels - 1) as f64).collect();
    let img = ImageTensor::new(32, 32, 1, data.clone()).unwrap();
    let draws = 10_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(77);

    let n = (draws * pixels) as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..draws {
        let out = diffuse(&img, 1000, &schedule, &mut rng).unwrap();
        for (x, y) in data.iter().zip(out.data().iter()) {
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
    }
    let cov = sxy / n - (sx / n) * (sy / n);
    let var_x = sxx / n - (sx / n) * (sx / n);
    let var_y = syy / n - (sy / n) * (sy / n);
    let corr = cov / (var_x * var_y).sqrt();
    assert!(
        corr.abs() < 0.05,
        "correlation {corr} should be near zero at the final step"
    );
}
