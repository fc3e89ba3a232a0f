use criterion::{criterion_group, criterion_main, Criterion};
use lrnet_bench::filled;
use lrnet_core::ops::{
    batchnorm_train, conv3x3, conv3x3_backward, maxpool2x2, upsample_bilinear2x,
};
use lrnet_core::Dims;
use std::hint::black_box;

fn conv(c: &mut Criterion) {
    let x = filled(Dims::new(10, 16, 64, 64), 1);
    let w = filled(Dims::new(32, 16, 3, 3), 2);
    let b = vec![0.0f32; 32];
    c.bench_function("conv3x3 10x16x64x64 -> 32", |bch| {
        bch.iter(|| conv3x3(black_box(&x), &w, &b).unwrap())
    });
    let g = filled(Dims::new(10, 32, 64, 64), 3);
    c.bench_function("conv3x3_backward 10x16x64x64 -> 32", |bch| {
        bch.iter(|| conv3x3_backward(black_box(&x), &w, &g).unwrap())
    });
}

fn others(c: &mut Criterion) {
    let x = filled(Dims::new(10, 32, 64, 64), 4);
    let gamma = vec![1.0f32; 32];
    let beta = vec![0.0f32; 32];
    c.bench_function("batchnorm_train 10x32x64x64", |b| {
        b.iter(|| batchnorm_train(black_box(&x), &gamma, &beta, 1e-5).unwrap())
    });
    c.bench_function("maxpool2x2 10x32x64x64", |b| {
        b.iter(|| maxpool2x2(black_box(&x)).unwrap())
    });
    let s = filled(Dims::new(10, 5, 32, 32), 5);
    c.bench_function("upsample_bilinear2x 10x5x32x32", |b| {
        b.iter(|| upsample_bilinear2x(black_box(&s)))
    });
}

criterion_group!(benches, conv, others);
criterion_main!(benches);
