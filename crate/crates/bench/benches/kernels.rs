use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synaptic_core::{build_model, Graph, ModelConfig, ModelKind, Tensor};

fn random(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor<f32> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap()
}

fn bench_matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for &n in &[32usize, 64, 128] {
        let a = random(vec![n, n], &mut rng);
        let b = random(vec![n, n], &mut rng);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            let mut g = Graph::<f32>::new();
            bench.iter(|| {
                g.clear();
                let x = g.constant(a.clone()).unwrap();
                let y = g.constant(b.clone()).unwrap();
                g.matmul(x, y).unwrap()
            })
        });
    }
    group.finish();
}

fn bench_recurrent(c: &mut Criterion) {
    let mut group = c.benchmark_group("recurrent_forward_backward");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for kind in [ModelKind::Rnn, ModelKind::Lstm] {
        for &seq in &[7usize, 30] {
            let cfg = ModelConfig::new(kind, 1, seq);
            let model = build_model::<f32>(&cfg, 3).unwrap();
            let x = random(vec![32, seq, 1], &mut rng);
            let t = random(vec![32, cfg.horizon], &mut rng);
            group.bench_with_input(
                BenchmarkId::new(kind.as_str(), seq),
                &seq,
                |bench, _| {
                    let mut g = Graph::<f32>::new();
                    let mut drop_rng = ChaCha8Rng::seed_from_u64(4);
                    bench.iter(|| {
                        g.clear();
                        let y = model.forward(&mut g, &x, &mut drop_rng, None).unwrap();
                        let target = g.constant(t.clone()).unwrap();
                        let loss = g.sq_error_loss(y, target).unwrap();
                        g.backward(loss).unwrap();
                    })
                },
            );
        }
    }
    group.finish();
}

criterion_group!(benches, bench_matmul, bench_recurrent);
criterion_main!(benches);
