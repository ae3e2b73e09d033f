//! Benchmarks of the data-parallel kernels. Run once with the default
//! features (rayon) and once with `--no-default-features` for the sequential
//! fallback; the bench names carry the mode so the reports line up.

use criterion::{criterion_group, criterion_main, Criterion};
use relax_core::density::{make_membrane_barrier, HFunction};
use relax_core::laminate::{ks_step, KsConfig};
use relax_core::mat::{Mat, Mat32, Vec3};
use relax_core::zest::{optimize_upper, OptimizeOptions};

const MODE: &str = if cfg!(feature = "parallel") {
    "parallel"
} else {
    "sequential"
};

fn bench_ks_step(c: &mut Criterion) {
    let w = make_membrane_barrier(2.0, HFunction::reciprocal());
    let xi = Mat::M32(Mat32::from_cols(Vec3::E1, Vec3::E1.scale(0.3)));
    let cfg = KsConfig::for_density(&w);
    c.bench_function(&format!("ks_step/{MODE}"), |b| {
        b.iter(|| ks_step(&|x: &Mat| w.at(x), &xi, &cfg))
    });
}

fn bench_optimize_upper(c: &mut Criterion) {
    let w = make_membrane_barrier(4.0, HFunction::reciprocal());
    let xi = Mat::M32(Mat32::ZERO);
    let opts = OptimizeOptions::default();
    c.bench_function(&format!("optimize_upper/{MODE}"), |b| {
        b.iter(|| optimize_upper(&w, &xi, &opts))
    });
}

criterion_group!(benches, bench_ks_step, bench_optimize_upper);
criterion_main!(benches);
