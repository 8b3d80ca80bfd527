use cband_core::eval::{krocc, srocc};
use cband_core::nss::{build_window, fit_ggd, mscn, DEFAULT_C1};
use cband_core::regressor::mlp_init;
use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn bench_mscn(c: &mut Criterion) {
    let window = build_window(3, 3).unwrap();
    let map: Vec<f32> = noise(56 * 56, 0).into_iter().map(|v| v as f32).collect();
    c.bench_function("mscn_56x56", |b| {
        b.iter(|| mscn(black_box(&map), 56, 56, &window, DEFAULT_C1).unwrap())
    });
}

fn bench_ggd(c: &mut Criterion) {
    let samples = noise(56 * 56, 1);
    c.bench_function("fit_ggd_3136", |b| {
        b.iter(|| fit_ggd(black_box(&samples)).unwrap())
    });
}

fn bench_mlp(c: &mut Criterion) {
    let model = mlp_init(2048, 0).unwrap();
    let x: Vec<f32> = noise(2048, 2).into_iter().map(|v| v as f32).collect();
    c.bench_function("mlp_predict_2048", |b| {
        b.iter(|| model.predict(black_box(&x)).unwrap())
    });
}

fn bench_correlation(c: &mut Criterion) {
    let x = noise(1000, 3);
    let y = noise(1000, 4);
    c.bench_function("srocc_1000", |b| {
        b.iter(|| srocc(black_box(&x), &y).unwrap())
    });
    c.bench_function("krocc_1000", |b| {
        b.iter(|| krocc(black_box(&x), &y).unwrap())
    });
}

criterion_group!(benches, bench_mscn, bench_ggd, bench_mlp, bench_correlation);
criterion_main!(benches);
