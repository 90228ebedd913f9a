use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hdrsr_bench::{random_tensor, synthetic_luminance};
use hdrsr_core::pipeline::{infer, PipelineConfig};
use hdrsr_core::refnet::{build_refnet, refnet_forward, RefNetConfig};
use hdrsr_core::retinex::decompose;
use hdrsr_core::tensor::{
    conv2d_backward, conv2d_forward, conv2d_general, tconv2d_forward, tconv2d_forward_reference,
    Tensor,
};
use hdrsr_core::training::{synthetic_patch_store, TrainConfig, Trainer};
use hdrsr_core::wls::{solve_wls, WlsParams};
use hdrsr_core::image::{PixelRange, RasterImage};
use std::hint::black_box;

fn wls(c: &mut Criterion) {
    let mut group = c.benchmark_group("wls");
    group.sample_size(10);
    for n in [64usize, 128, 256] {
        let y = synthetic_luminance(n, n);
        let guide = y.map(|v| v + 1e-4);
        group.bench_with_input(BenchmarkId::new("solve", n), &n, |b, _| {
            b.iter(|| solve_wls(black_box(&y), &guide, &WlsParams::default()).unwrap())
        });
    }
    let y = synthetic_luminance(128, 128);
    group.bench_function("decompose/128", |b| b.iter(|| decompose(black_box(&y), &WlsParams::default()).unwrap()));
    group.finish();
}

fn convolution(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv3x3");
    let x = random_tensor(&[4, 48, 48, 32], 1);
    let w = random_tensor(&[3, 3, 32, 32], 2);
    let bias = vec![0.0f32; 32];
    group.bench_function("gemm_forward", |b| b.iter(|| conv2d_forward(black_box(&x), &w, &bias, 1).unwrap()));
    group.bench_function("direct_forward", |b| {
        b.iter(|| conv2d_general(black_box(&x), &w, Some(&bias), 1, 1).unwrap())
    });
    let up = random_tensor(&[4, 48, 48, 32], 3);
    group.bench_function("gemm_backward", |b| b.iter(|| conv2d_backward(black_box(&x), &w, &up, 1).unwrap()));
    group.finish();

    let mut group = c.benchmark_group("tconv4x4");
    let x = random_tensor(&[4, 24, 24, 32], 4);
    let w = random_tensor(&[4, 4, 32, 16], 5);
    let bias = vec![0.0f32; 16];
    group.bench_function("gemm_forward", |b| b.iter(|| tconv2d_forward(black_box(&x), &w, &bias).unwrap()));
    group.bench_function("direct_forward", |b| {
        b.iter(|| tconv2d_forward_reference(black_box(&x), &w, &bias).unwrap())
    });
    group.finish();
}

fn network(c: &mut Criterion) {
    let mut group = c.benchmark_group("refnet");
    group.sample_size(10);
    let full = build_refnet(&RefNetConfig::default(), 0).unwrap();
    let x = Tensor::filled(vec![1, 48, 48, 1], 0.1);
    group.bench_function("forward_default_48", |b| b.iter(|| refnet_forward(&full, black_box(&x)).unwrap()));

    let store = synthetic_patch_store(16, 0).unwrap();
    let config = TrainConfig {
        batch_size: 8,
        total_steps: 1_000_000,
        generator: RefNetConfig::small(8, 2),
        checkpoint_every: 0,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(config, &store).unwrap();
    group.bench_function("train_step_small_batch8", |b| b.iter(|| trainer.step().unwrap()));
    group.finish();
}

fn pipeline(c: &mut Criterion) {
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    let net = build_refnet(&RefNetConfig::small(8, 2), 0).unwrap();
    let y = synthetic_luminance(64, 64);
    let planes = [y.clone(), y.map(|v| 1.0 - v), y.map(|v| 0.5 * v + 0.25)];
    let refs: Vec<_> = planes.iter().collect();
    let img = RasterImage::from_planes(&refs, PixelRange::Ldr).unwrap();
    group.bench_function("infer_64", |b| b.iter(|| infer(black_box(&img), &net, &PipelineConfig::default()).unwrap()));
    group.finish();
}

criterion_group!(benches, wls, convolution, network, pipeline);
criterion_main!(benches);
