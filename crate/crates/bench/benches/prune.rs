use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synaptic_core::pruning::prune_pool;
use synaptic_core::TiePolicy;

fn layers(sizes: &[usize], seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sizes
        .iter()
        .map(|&n| (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect())
        .collect()
}

fn bench_prune_pool(c: &mut Criterion) {
    let mut group = c.benchmark_group("prune_pool");
    for &total in &[10_000usize, 100_000, 1_000_000] {
        let sizes = [total / 2, total / 4, total / 4];
        let w = layers(&sizes, 7);
        for policy in [TiePolicy::ExactCount, TiePolicy::StrictBelow] {
            group.bench_with_input(
                BenchmarkId::new(format!("{policy:?}"), total),
                &w,
                |b, w| {
                    b.iter_batched(
                        || w.iter().map(|l| vec![1u8; l.len()]).collect::<Vec<_>>(),
                        |mut masks| {
                            let refs: Vec<&[f32]> = w.iter().map(|l| l.as_slice()).collect();
                            let mut bits: Vec<&mut [u8]> =
                                masks.iter_mut().map(|m| m.as_mut_slice()).collect();
                            prune_pool(&refs, &mut bits, 0.5, policy)
                        },
                        BatchSize::LargeInput,
                    )
                },
            );
        }
    }
    group.finish();
}

criterion_group!(benches, bench_prune_pool);
criterion_main!(benches);
