use criterion::{criterion_group, criterion_main, Criterion};
use lrnet_bench::{desk_config, desk_dataset};
use lrnet_core::model::{
    downsampled_targets, init_params, model_backward, model_forward, total_loss,
};
use lrnet_core::ops::BnMode;
use lrnet_core::train::{sgd_step, OptState};
use std::hint::black_box;

fn forward_backward(c: &mut Criterion) {
    let cfg = desk_config();
    let ds = desk_dataset(10);
    let mean = ds.mean_pixel().unwrap();
    let idx: Vec<usize> = (0..10).collect();
    let (images, labels) = ds.batch(&idx, &mean).unwrap();
    let targets = downsampled_targets(&labels, &cfg.model).unwrap();
    let weights = vec![1.0f32; cfg.model.num_classes];
    let params = init_params::<f32>(&cfg.model, 0).unwrap();

    c.bench_function("model_forward infer batch 10", |b| {
        b.iter(|| model_forward(&params, &cfg.model, black_box(&images), BnMode::Infer).unwrap())
    });
    c.bench_function("train step batch 10", |b| {
        let mut p = params.clone();
        let mut opt = OptState::new(&p);
        b.iter(|| {
            let pass = model_forward(&p, &cfg.model, &images, BnMode::Train).unwrap();
            let loss = total_loss(&pass.outputs, &targets, &weights).unwrap();
            let grads = model_backward(&p, &pass, &loss.grads).unwrap();
            p.update_running_stats(pass.cache.as_ref().unwrap()).unwrap();
            sgd_step(&mut p, &grads, &mut opt, 1e-3, &cfg.train).unwrap();
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = forward_backward
}
criterion_main!(benches);
