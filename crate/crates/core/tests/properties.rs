//! Property tests for the spec-level invariants.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use shape_core::augment::{apply_bank, contrast, gamma, hflip, AugmentationSpec};
use shape_core::dpo::{bt_prob, dpo_loss, dpo_loss_from_margin, EncodedTriplet};
use shape_core::eval::{chair_scores, extract_objects, CaptionRecord, ObjectVocabulary};
use shape_core::{ImageTensor, Policy, TokenSequence};

fn image_strategy() -> impl Strategy<Value = ImageTensor> {
    (1usize..6, 1usize..6, prop_oneof![Just(1usize), Just(3usize)]).prop_flat_map(
        |(h, w, c)| {
            proptest::collection::vec(0.0f64..=1.0, h * w * c)
                .prop_map(move |data| ImageTensor::new(h, w, c, data).unwrap())
        },
    )
}

fn spec_strategy() -> impl Strategy<Value = AugmentationSpec> {
    prop_oneof![
        Just(AugmentationSpec::Identity),
        Just(AugmentationSpec::HFlip),
        (0.1f64..0.9, 0.0f64..0.1)
            .prop_map(|(lo, extra)| AugmentationSpec::Crop { s_min: lo, s_max: (lo + extra).min(1.0) }),
        (0usize..=50).prop_map(|t| AugmentationSpec::DiffusionNoise {
            t,
            total_steps: 50,
            beta_start: 1e-4,
            beta_end: 0.02,
        }),
        (0.2f64..4.0).prop_map(|factor| AugmentationSpec::Contrast { factor }),
        (0.2f64..3.0).prop_map(|value| AugmentationSpec::Gamma { value }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn augmentation_preserves_range_dims_and_is_deterministic(
        img in image_strategy(),
        spec in spec_strategy(),
        seed in any::<u64>(),
    ) {
        // Crop requires at least 2x2.
        prop_assume!(
            !matches!(spec, AugmentationSpec::Crop { .. })
                || (img.height() >= 2 && img.width() >= 2)
        );
        let mut rng_a = ChaCha8Rng::seed_from_u64(seed);
        let mut rng_b = ChaCha8Rng::seed_from_u64(seed);
        let a = spec.apply(&img, &mut rng_a).unwrap();
        let b = spec.apply(&img, &mut rng_b).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.height(), img.height());
        prop_assert_eq!(a.width(), img.width());
        prop_assert_eq!(a.channels(), img.channels());
        for &v in a.data() {
            prop_assert!((0.0..=1.0).contains(&v) && v.is_finite());
        }
    }

    #[test]
    fn gamma_and_contrast_preserve_pixel_order(
        img in image_strategy(),
        value in 0.2f64..3.0,
        factor in 0.2f64..4.0,
    ) {
        let g = gamma(&img, value).unwrap();
        let c = contrast(&img, factor).unwrap();
        let n = img.data().len();
        for i in 0..n {
            for j in (i + 1)..n.min(i + 8) {
                let (x, y) = (img.data()[i], img.data()[j]);
                if x <= y {
                    prop_assert!(g.data()[i] <= g.data()[j] + 1e-15);
                    prop_assert!(c.data()[i] <= c.data()[j] + 1e-15);
                }
            }
        }
    }

    #[test]
    fn hflip_is_an_involution(img in image_strategy()) {
        prop_assert_eq!(hflip(&hflip(&img)), img);
    }

    #[test]
    fn bank_outputs_one_image_per_spec(
        img in image_strategy(),
        seed in any::<u64>(),
        n in 1usize..4,
    ) {
        let specs: Vec<AugmentationSpec> =
            std::iter::repeat_n(AugmentationSpec::Identity, n).collect();
        let out = apply_bank(&img, &specs, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(out.len(), n);
        for o in out {
            prop_assert_eq!(o, img.clone());
        }
    }

    #[test]
    fn bt_prob_complement_and_shift(
        a in -20.0f64..20.0,
        b in -20.0f64..20.0,
        shift in -100.0f64..100.0,
    ) {
        let p = bt_prob(a, b).unwrap();
        let q = bt_prob(b, a).unwrap();
        prop_assert!((p + q - 1.0).abs() < 1e-12);
        // The implementation only sees the difference, so when the shifted
        // subtraction is exact the result is bit-identical; otherwise the
        // discrepancy is bounded by rounding in the caller's arithmetic.
        let shifted = bt_prob(a + shift, b + shift).unwrap();
        if (a + shift) - (b + shift) == a - b {
            prop_assert_eq!(p, shifted);
        } else {
            prop_assert!((p - shifted).abs() < 1e-10);
        }
    }

    #[test]
    fn dpo_loss_complement_identity(margin in -40.0f64..40.0) {
        let sum = (-dpo_loss_from_margin(margin)).exp()
            + (-dpo_loss_from_margin(-margin)).exp();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(dpo_loss_from_margin(margin) > 0.0);
    }

    #[test]
    fn extraction_ignores_punctuation_and_spacing(
        spaces in 1usize..4,
        punct in prop_oneof![Just(","), Just("."), Just("!"), Just(";")],
    ) {
        let vocab = ObjectVocabulary::new(
            ["dog", "cat", "hot dog"].map(String::from),
            [("puppy".to_string(), "dog".to_string())],
        )
        .unwrap();
        let pad = " ".repeat(spaces);
        let messy = format!("A{pad}puppy{punct}{pad}and a hot{pad}dog{punct} plus cats");
        let clean = "a puppy and a hot dog plus cats";
        prop_assert_eq!(extract_objects(&messy, &vocab), extract_objects(clean, &vocab));
    }
}

#[test]
fn seq_logprob_split_additivity_and_normalization() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    use rand::Rng;
    for _ in 0..20 {
        let mut policy = Policy::uniform(8, 4);
        for w in policy.weights_mut() {
            *w = rng.random_range(-2.0..2.0);
        }
        let len = rng.random_range(2..10usize);
        let tokens: Vec<u32> = (0..len).map(|_| rng.random_range(0..8u32)).collect();
        let seq = TokenSequence::new(tokens, 8).unwrap();
        let lp = policy.seq_logprob(1, &seq).unwrap();

        // Splitting anywhere and resuming the same left-to-right fold gives
        // the identical total, bit for bit.
        for k in 0..=lp.per_token.len() {
            let head = lp.per_token[..k].iter().fold(0.0, |acc, &v| acc + v);
            let resumed = lp.per_token[k..].iter().fold(head, |acc, &v| acc + v);
            assert_eq!(resumed.to_bits(), lp.total.to_bits());
        }

        // Implied next-token distributions are normalized.
        for prev in 0..=8usize {
            let mut sum = 0.0;
            for next in 0..8u32 {
                let one = TokenSequence::new(vec![next], 8).unwrap();
                if prev == 8 {
                    sum += policy.seq_logprob(1, &one).unwrap().total.exp();
                }
            }
            if prev == 8 {
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn dpo_identity_and_swap_over_random_states() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    for _ in 0..50 {
        let mut policy = Policy::uniform(12, 6);
        for w in policy.weights_mut() {
            *w = rng.random_range(-1.5..1.5);
        }
        let draw = |rng: &mut ChaCha8Rng| {
            let len = rng.random_range(1..6usize);
            let tokens: Vec<u32> = (0..len).map(|_| rng.random_range(0..12u32)).collect();
            TokenSequence::new(tokens, 12).unwrap()
        };
        let t = EncodedTriplet {
            context_w: rng.random_range(0..6),
            context_l: rng.random_range(0..6),
            winner: draw(&mut rng),
            loser: draw(&mut rng),
        };
        let loss = dpo_loss(&policy, &policy, &t, 0.1).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-9);
    }
}

/// Brute-force recount: mention sets are known by construction, so the
/// scores reduce to plain set arithmetic done independently of
/// `chair_scores`'s own bookkeeping.
#[test]
fn chair_matches_brute_force_recount_on_synthetic_corpus() {
    use rand::Rng;
    let objects: Vec<String> = (0..20).map(|i| format!("obj{i}")).collect();
    let vocab = ObjectVocabulary::new(objects.clone(), std::iter::empty()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2718);

    let mut records = Vec::new();
    let mut mention_sets = Vec::new();
    for i in 0..200 {
        let mentioned: Vec<String> = objects
            .iter()
            .filter(|_| rng.random_range(0..100) < 20)
            .cloned()
            .collect();
        let truth: std::collections::BTreeSet<String> = objects
            .iter()
            .filter(|_| rng.random_range(0..100) < 30)
            .cloned()
            .collect();
        let caption = format!("scene with {}", mentioned.join(" and "));
        records.push(CaptionRecord {
            image_id: format!("img{i}"),
            caption,
            ground_truth: truth,
        });
        mention_sets.push(
            mentioned
                .into_iter()
                .collect::<std::collections::BTreeSet<String>>(),
        );
    }

    let scores = chair_scores(&records, &vocab).unwrap();

    let mut mentioned_total = 0usize;
    let mut hallucinated_total = 0usize;
    let mut captions_with = 0usize;
    for (record, mentioned) in records.iter().zip(mention_sets.iter()) {
        let hallucinated = mentioned
            .iter()
            .filter(|m| !record.ground_truth.contains(*m))
            .count();
        mentioned_total += mentioned.len();
        hallucinated_total += hallucinated;
        if hallucinated > 0 {
            captions_with += 1;
        }
    }
    let expected_i = hallucinated_total as f64 / mentioned_total as f64;
    let expected_s = captions_with as f64 / records.len() as f64;
    assert_eq!(scores.chair_i, expected_i, "instance-level recount");
    assert_eq!(scores.chair_s, expected_s, "sentence-level recount");
    assert_eq!(scores.counts.mentioned_objects, mentioned_total);
    assert_eq!(scores.counts.hallucinated_objects, hallucinated_total);
}

#[test]
fn serialization_round_trips_every_core_type() {
    use shape_core::manifest::{IterationRecord, RunManifest};
    use shape_core::{CandidateAnswer, PreferenceTriplet, Sample, SampleImage};

    let img = ImageTensor::new(2, 3, 1, vec![0.0, 0.25, 0.5, 0.125, 1.0, 0.75]).unwrap();
    let round: ImageTensor = serde_json::from_str(&serde_json::to_string(&img).unwrap()).unwrap();
    assert_eq!(round, img);

    let sample = Sample::new("s1", SampleImage::Tensor(img), "what?").unwrap();
    let round: Sample = serde_json::from_str(&serde_json::to_string(&sample).unwrap()).unwrap();
    assert_eq!(round, sample);

    let triplet = PreferenceTriplet::new(
        "s1",
        2,
        "what?",
        "big answer",
        "small answer",
        vec![CandidateAnswer::new("gamma(0.8)", "candidate text")],
        "summarize please",
    )
    .unwrap();
    let round: PreferenceTriplet =
        serde_json::from_str(&serde_json::to_string(&triplet).unwrap()).unwrap();
    assert_eq!(round, triplet);

    let seq = TokenSequence::new(vec![0, 5, 3], 16).unwrap();
    let round: TokenSequence = serde_json::from_str(&serde_json::to_string(&seq).unwrap()).unwrap();
    assert_eq!(round, seq);

    let manifest = RunManifest {
        run_id: "abcd".into(),
        seed: 9,
        config_digest: "ff00".into(),
        initial_checkpoint_id: "init".into(),
        initial_checkpoint_path: "c0.json".into(),
        iterations: vec![IterationRecord {
            index: 1,
            dataset_path: "d1.jsonl".into(),
            checkpoint_id: "ck1".into(),
            checkpoint_path: "c1.json".into(),
            reference_checkpoint_id: "init".into(),
            trajectory_path: "t1.csv".into(),
        }],
        recorded_hparams: [("beta".to_string(), serde_json::json!(0.1))]
            .into_iter()
            .collect(),
    };
    let round: RunManifest =
        serde_json::from_str(&serde_json::to_string(&manifest).unwrap()).unwrap();
    assert_eq!(round, manifest);

    let policy = Policy::uniform(4, 2);
    let round: Policy = serde_json::from_str(&serde_json::to_string(&policy).unwrap()).unwrap();
    assert_eq!(round, policy);
}
