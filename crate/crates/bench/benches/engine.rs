use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nrdicke_bench::{frustrated, kicked_normal};
use nrdicke_core::dynamics::{classification_integrator, fourier_spectrum, probe_series, SpectrumConfig};
use nrdicke_core::stability::{dyn_matrix_at, EpOptions, PathParam};
use nrdicke_core::*;

fn vector_fields(c: &mut Criterion) {
    let p = frustrated(35.0);
    let st = kicked_normal();
    c.bench_function("rhs_full", |b| b.iter(|| rhs_full(black_box(&st), &p)));
    c.bench_function("rhs_adiabatic", |b| b.iter(|| rhs_adiabatic(black_box(&st.spins), &p)));
}

fn integration(c: &mut Criterion) {
    let mut g = c.benchmark_group("integrate");
    g.sample_size(20);
    let st = kicked_normal();
    for lam in [10.8, 35.0] {
        let p = frustrated(lam);
        let cfg = classification_integrator(500.0);
        g.bench_function(format!("adiabatic_t500_lambda{lam}"), |b| b.iter(|| integrate(&st, &p, &cfg).unwrap()));
    }
    let p = frustrated(10.8);
    let cfg = IntegratorConfig::default().with_t_end(5.0).with_mode(Mode::Full);
    g.bench_function("full_t5", |b| b.iter(|| integrate(&st, &p, &cfg).unwrap()));
    g.finish();
}

fn stationary(c: &mut Criterion) {
    let mut g = c.benchmark_group("stationary");
    g.sample_size(20);
    let p = frustrated(54.0);
    g.bench_function("census_fsop", |b| b.iter(|| census(&p, &CensusOptions::default()).unwrap()));
    let roots = find_all_stationary(&p, &SeedStrategy::default()).unwrap();
    let fp = roots.iter().find(|r| !r.is_trivial(1e-6)).unwrap().clone();
    g.bench_function("jacobian_spectrum", |b| b.iter(|| dyn_matrix_at(black_box(&fp), &p).unwrap().eigenvalues()));
    g.bench_function("assess", |b| b.iter(|| assess(black_box(&fp), &p, &StabilityOptions::default()).unwrap()));
    let values: Vec<f64> = (0..=40).map(|k| 54.0 - 3.6 * k as f64 / 40.0).collect();
    g.bench_function("ep_scan_40", |b| {
        b.iter(|| detect_ep(PathParam::Lambda, &p, &values, &fp.spins, &EpOptions::default()))
    });
    g.finish();
}

fn spectrum(c: &mut Criterion) {
    let p = frustrated(49.0);
    let tr = integrate(&kicked_normal(), &p, &classification_integrator(4000.0)).unwrap();
    let series = probe_series(&tr);
    c.bench_function("fourier_spectrum_80k", |b| {
        b.iter(|| fourier_spectrum(black_box(&series), tr.dt(), &SpectrumConfig::default()).unwrap())
    });
}

criterion_group!(benches, vector_fields, integration, stationary, spectrum);
criterion_main!(benches);
