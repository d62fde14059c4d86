use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use credit_hjb::lambertw::{theta, theta_exp};
use credit_hjb::pricing::{h_root, insurance_rate_h_form};

fn bench_theta(c: &mut Criterion) {
    let ys: Vec<f64> = (0..1000).map(|i| 10f64.powf(-6.0 + 12.0 * i as f64 / 999.0)).collect();
    c.bench_function("theta/1000 log-spaced", |b| {
        b.iter(|| ys.iter().map(|&y| theta(black_box(y)).unwrap()).sum::<f64>())
    });
    let us: Vec<f64> = (0..1000).map(|i| -20.0 + 40.0 * i as f64 / 999.0).collect();
    c.bench_function("theta_exp/1000", |b| {
        b.iter(|| us.iter().map(|&u| theta_exp(black_box(u)).unwrap()).sum::<f64>())
    });
}

fn bench_insurance(c: &mut Criterion) {
    let ys: Vec<f64> = (1..=1000).map(|i| 0.01 * i as f64).collect();
    c.bench_function("h_root/1000", |b| b.iter(|| ys.iter().map(|&y| h_root(black_box(y)).unwrap()).sum::<f64>()));
    c.bench_function("h_form/1000", |b| {
        b.iter(|| ys.iter().map(|&y| insurance_rate_h_form(black_box(0.5), black_box(y)).unwrap()).sum::<f64>())
    });
}

criterion_group!(benches, bench_theta, bench_insurance);
criterion_main!(benches);
