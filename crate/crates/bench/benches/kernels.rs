use criterion::{black_box, criterion_group, criterion_main, Criterion};
use dmgdet_bench::{evaluation_set, random_detections, random_tensor};
use dmgdet_core::attention::{AttentionConfig, Cbam, WindowAttention};
use dmgdet_core::geometry::nms;
use dmgdet_core::metrics::ap_sweep;
use dmgdet_core::params::Parameterized;
use dmgdet_core::tensor::conv2d;

fn convolution(c: &mut Criterion) {
    let x = random_tensor(&[64, 52, 52], 1);
    let w = random_tensor(&[64, 64, 3, 3], 2);
    let b = random_tensor(&[64], 3);
    c.bench_function("conv2d 64->64 3x3 at 52x52", |bench| {
        bench.iter(|| conv2d(black_box(&x), &w, Some(&b), 1, 1).unwrap())
    });
}

fn attention(c: &mut Criterion) {
    let cfg = AttentionConfig::new(128);
    let mut attn = WindowAttention::new(&cfg).unwrap();
    attn.randomize(4, 0.1);
    let tokens = random_tensor(&[26, 26, 128], 5);
    c.bench_function("sw-msa 26x26x128 m=4", |bench| bench.iter(|| attn.sw_msa(black_box(&tokens)).unwrap()));

    let mut cbam = Cbam::new(&cfg).unwrap();
    cbam.randomize(6, 0.1);
    let map = random_tensor(&[128, 26, 26], 7);
    c.bench_function("cbam 128x26x26", |bench| bench.iter(|| cbam.forward(black_box(&map)).unwrap()));
}

fn postprocess(c: &mut Criterion) {
    let dets = random_detections(2000, 8, 8);
    c.bench_function("nms 2000 boxes", |bench| bench.iter(|| nms(black_box(&dets), 0.45)));

    let images = evaluation_set(200, 8, 9);
    c.bench_function("ap50:95 one class, 200 images", |bench| bench.iter(|| ap_sweep(black_box(&images), 3)));
}

criterion_group!(benches, convolution, attention, postprocess);
criterion_main!(benches);
