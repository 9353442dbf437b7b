use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shape_bench::random_image;
use shape_core::augment::{apply_bank, build_schedule, diffuse, AugmentationSpec};

fn bench_augment(c: &mut Criterion) {
    let img = random_image(64, 64, 7);
    let schedule = build_schedule(1000, 1e-4, 0.02).unwrap();

    c.bench_function("diffuse_64x64_t200", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        b.iter(|| diffuse(&img, 200, &schedule, &mut rng).unwrap())
    });

    c.bench_function("crop_64x64", |b| {
        let spec = AugmentationSpec::preset("crop").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        b.iter(|| spec.apply(&img, &mut rng).unwrap())
    });

    c.bench_function("candidate3_bank_64x64", |b| {
        let bank = AugmentationSpec::candidate3_bank();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        b.iter(|| apply_bank(&img, &bank, &mut rng).unwrap())
    });
}

criterion_group!(benches, bench_augment);
criterion_main!(benches);
