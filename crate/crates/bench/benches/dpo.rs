use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use shape_bench::{random_policy, random_triplets};
use shape_core::dpo::{dpo_loss, eval_batch, train, TrainConfig};

fn bench_dpo(c: &mut Criterion) {
    let policy = random_policy(16, 64, 1);
    let reference = random_policy(16, 64, 2);
    let batch = random_triplets(16, 64, 64, 3);

    c.bench_function("dpo_loss_single", |b| {
        b.iter(|| dpo_loss(&policy, &reference, &batch[0], 0.1).unwrap())
    });

    c.bench_function("dpo_grad_batch64", |b| {
        b.iter(|| eval_batch(&policy, &reference, &batch, 0.1).unwrap())
    });

    let data = random_triplets(16, 64, 256, 4);
    let cfg = TrainConfig {
        beta: 0.1,
        learning_rate: 0.5,
        steps: 20,
        batch_size: 256,
        seed: 5,
    };
    c.bench_function("train_256x20", |b| {
        b.iter_batched(
            || (policy.clone(), data.clone()),
            |(initial, data)| train(&initial, &reference, &data, &cfg).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, bench_dpo);
criterion_main!(benches);
