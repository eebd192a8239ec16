use convexlab::airy::{self, AiryZeroTable, PhaseLConfig};
use convexlab::green_spectral::{linspace, Spectral, SpectralConfig, Weighting};
use convexlab::model::{ModelParams, QuadraticForm};
use convexlab::nls::{build_transform, random_state, strang_step, DomainConfig};
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn airy_functions(c: &mut Criterion) {
    let xs = linspace(-40.0, 8.0, 256);
    c.bench_function("airy pair on 256 points", |b| b.iter(|| xs.iter().map(|&x| airy::airy(black_box(x)).0).sum::<f64>()));
    let cfg = PhaseLConfig::default();
    let ws = linspace(0.0, 200.0, 256);
    c.bench_function("phase L on 256 points", |b| b.iter(|| ws.iter().map(|&w| airy::phase_l(black_box(w), &cfg)).sum::<f64>()));
    c.bench_function("zero table of 1024", |b| b.iter(|| AiryZeroTable::build(black_box(1024)).unwrap().len()));
}

fn spectral_field(c: &mut Criterion) {
    let form = QuadraticForm::identity(1);
    let s = Spectral::new(ModelParams::new(0.05, 0.25, 0.3), &form, AiryZeroTable::shared(), SpectralConfig::default()).unwrap();
    let (xs, ys) = (linspace(0.05, 0.45, 5), linspace(-1.6, -0.6, 21));
    c.bench_function("spectral field 5x21", |b| b.iter(|| s.field(black_box(0.6), &xs, &ys, Weighting::Total).unwrap().sup().sup));
}

fn nls_step(c: &mut Criterion) {
    let domain = build_transform(&DomainConfig::default(), AiryZeroTable::shared()).unwrap();
    let state = random_state(&domain, 3, 6, 0.5);
    c.bench_function("strang step", |b| b.iter(|| strang_step(&domain, black_box(&state), 1e-3, 1.0).unwrap()));
}

criterion_group!(benches, airy_functions, spectral_field, nls_step);
criterion_main!(benches);
