use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ivsnet_bench::random_tensor;
use ivsnet_core::net::{NetworkConfig, SiameseModel};
use ivsnet_core::tensor::kernels::{conv3d_backward, conv3d_forward, maxpool3d_backward, maxpool3d_forward};
use ivsnet_core::tensor::{ConvSpec, PoolSpec};
use ivsnet_core::Tensor;

fn conv(c: &mut Criterion) {
    let spec = ConvSpec::same_3x3x3(32);
    let x = random_tensor(&[16, 8, 28, 28], 1);
    let w = random_tensor(&[32, 16, 3, 3, 3], 2);
    let b = random_tensor(&[32], 3);
    let g = conv3d_forward(&x, &w, &b, &spec).unwrap();
    c.bench_function("conv3d_forward_f64_16x8x28x28", |bch| {
        bch.iter(|| conv3d_forward(black_box(&x), &w, &b, &spec).unwrap())
    });
    let (xf, wf, bf): (Tensor<f32>, Tensor<f32>, Tensor<f32>) = (x.cast(), w.cast(), b.cast());
    c.bench_function("conv3d_forward_f32_16x8x28x28", |bch| {
        bch.iter(|| conv3d_forward(black_box(&xf), &wf, &bf, &spec).unwrap())
    });
    c.bench_function("conv3d_backward_f64_16x8x28x28", |bch| {
        bch.iter(|| conv3d_backward(black_box(&x), &w, &spec, &g).unwrap())
    });
}

fn pool(c: &mut Criterion) {
    let spec = PoolSpec::temporal(2, 2);
    let x = random_tensor(&[32, 8, 28, 28], 4);
    let (y, argmax) = maxpool3d_forward(&x, &spec).unwrap();
    c.bench_function("maxpool3d_forward_32x8x28x28", |bch| {
        bch.iter(|| maxpool3d_forward(black_box(&x), &spec).unwrap())
    });
    c.bench_function("maxpool3d_backward_32x8x28x28", |bch| {
        bch.iter(|| maxpool3d_backward(x.shape(), black_box(&argmax), &y).unwrap())
    });
}

fn tiny_forward(c: &mut Criterion) {
    let model = SiameseModel::build(NetworkConfig::tiny(5)).unwrap();
    let clip = random_tensor(&model.config().input_shape, 5);
    c.bench_function("tiny_model_features", |bch| {
        bch.iter(|| model.forward_features(black_box(&clip)).unwrap())
    });
}

criterion_group!(benches, conv, pool, tiny_forward);
criterion_main!(benches);
