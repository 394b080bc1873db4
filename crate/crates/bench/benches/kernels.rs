//! Hot-path benchmarks: one flow step, the curvature bundle, the
//! distributional pairing, and geodesic distance, all at N = 65.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use rdlab_bench::bump_metric;
use rdlab_core::curvature::curvature;
use rdlab_core::field::ScalarField;
use rdlab_core::flow::{geodesic_distance, rdtf_step};
use rdlab_core::weak::distributional_scalar;

fn bench_kernels(c: &mut Criterion) {
    let g = bump_metric(65, 0.1);
    let grid = *g.grid();
    let h = grid.spacing();
    let dt = 0.1 * h * h;

    c.bench_function("rdtf_step_n65", |b| {
        b.iter(|| rdtf_step(black_box(&g), black_box(dt)).unwrap())
    });

    c.bench_function("curvature_bundle_n65", |b| {
        b.iter(|| curvature(black_box(&g)).unwrap())
    });

    let u = ScalarField::from_fn(grid, |x| {
        let r2 = (x[0] * x[0] + x[1] * x[1]) / 0.25;
        if r2 < 1.0 {
            (1.0 - r2).powi(4)
        } else {
            0.0
        }
    });
    c.bench_function("distributional_scalar_n65", |b| {
        b.iter(|| distributional_scalar(black_box(&g), black_box(&u)).unwrap())
    });

    let center = grid.flatten([(grid.points_per_axis - 1) / 2; 3]);
    c.bench_function("geodesic_distance_n65", |b| {
        b.iter(|| geodesic_distance(black_box(&g), black_box(center)).unwrap())
    });
}

criterion_group! {
    name = kernels;
    config = Criterion::default().sample_size(20);
    targets = bench_kernels
}
criterion_main!(kernels);
