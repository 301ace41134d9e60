use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rmtpair_bench::fixture_matrix;
use rmtpair_core::filtering::{FilterSpec, KernelSpec};
use rmtpair_core::gft_flow::{build_entry_data, evolve_exact, FlowState};
use rmtpair_core::mde::{linspace, scdos, MdeOptions, SelfEnergy};
use rmtpair_core::model::{CorrelationProfile, SymmetryClass};
use rmtpair_core::{rng, HMatrix};

fn eigen(c: &mut Criterion) {
    let mut g = c.benchmark_group("eigenvalues");
    g.sample_size(10);
    for n in [100, 400] {
        for sym in [SymmetryClass::RealSymmetric, SymmetryClass::ComplexHermitian] {
            let h = fixture_matrix(n, sym);
            g.bench_with_input(BenchmarkId::new(format!("{sym:?}"), n), &h, |b, h| b.iter(|| h.eigenvalues().unwrap()));
        }
    }
    g.finish();
}

fn mde(c: &mut Criterion) {
    let n = 200;
    let d: Vec<f64> = (0..n).map(|i| if i < n / 2 { 1.0 } else { -1.0 }).collect();
    let a = HMatrix::from_diagonal(&d, SymmetryClass::RealSymmetric);
    let s = SelfEnergy::flat(n);
    let grid = linspace(-3.5, 3.5, 101);
    c.bench_function("scdos_diagonal_n200_101pts", |b| {
        b.iter(|| scdos(black_box(&a), &s, &grid, 0.01, &MdeOptions::default()).unwrap())
    });
}

fn flow(c: &mut Criterion) {
    let n = 200;
    let profile = CorrelationProfile::generic(SymmetryClass::RealSymmetric, 0.1);
    let data = Arc::new(build_entry_data(&profile, n, SymmetryClass::RealSymmetric).unwrap());
    let w = fixture_matrix(n, SymmetryClass::RealSymmetric);
    let state = FlowState::new(data, &w, &w).unwrap();
    let mut r = rng::seeded(1);
    c.bench_function("evolve_exact_n200", |b| b.iter(|| evolve_exact(&state, 0.05, &mut r).unwrap()));
}

fn filter(c: &mut Criterion) {
    let mut g = c.benchmark_group("convolution_filter");
    g.sample_size(20);
    for n in [48, 128] {
        let spec = FilterSpec::convolution(KernelSpec::Preset("power_decay(3,1)".into()), 3.0, 1.0);
        let w = fixture_matrix(n, SymmetryClass::RealSymmetric);
        g.bench_with_input(BenchmarkId::from_parameter(n), &w, |b, w| b.iter(|| spec.apply(w).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, eigen, mde, flow, filter);
criterion_main!(benches);
