use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gx2::{gx2cdf, gx2inv, gx2pdf, sample, EvalSettings, Method, Prob, SamplePath, Side};
use gx2_bench::{elliptical, mixed, mixed_3d, settings};
use std::hint::black_box;

fn cdf_methods(c: &mut Criterion) {
    let p = elliptical();
    let st = EvalSettings::default();
    let mut g = c.benchmark_group("cdf_body");
    g.sample_size(10);
    for m in [
        Method::Imhof,
        Method::Ruben,
        Method::Ifft,
        Method::Pearson,
        Method::Auto,
    ] {
        g.bench_function(BenchmarkId::from_parameter(m.name()), |b| {
            b.iter(|| gx2cdf(&p, black_box(&[20.0]), Side::Lower, m, &st).unwrap())
        });
    }
    let mc = settings(10_000);
    g.bench_function("ray_mc_1e4", |b| {
        b.iter(|| gx2cdf(&p, black_box(&[20.0]), Side::Lower, Method::Ray, &mc).unwrap())
    });
    let q = mixed_3d();
    g.bench_function("ray_quadrature_3d", |b| {
        b.iter(|| gx2cdf(&q, black_box(&[1.0]), Side::Lower, Method::Ray, &st).unwrap())
    });
    g.finish();
}

fn tails(c: &mut Criterion) {
    let p = elliptical();
    let st = EvalSettings::default();
    let mut g = c.benchmark_group("tails");
    g.bench_function("tail_upper", |b| {
        b.iter(|| gx2cdf(&p, black_box(&[4000.0]), Side::Upper, Method::Tail, &st).unwrap())
    });
    g.bench_function("ellipse_lower", |b| {
        b.iter(|| gx2cdf(&p, black_box(&[1e-6]), Side::Lower, Method::Ellipse, &st).unwrap())
    });
    g.bench_function("ruben_upper_deep", |b| {
        b.iter(|| gx2cdf(&p, black_box(&[1500.0]), Side::Upper, Method::Ruben, &st).unwrap())
    });
    g.finish();
}

fn pdf_and_inverse(c: &mut Criterion) {
    let p = elliptical();
    let st = EvalSettings::default();
    let mut g = c.benchmark_group("pdf_inverse");
    g.sample_size(10);
    g.bench_function("imhof_pdf", |b| {
        b.iter(|| gx2pdf(&p, black_box(&[20.0]), Method::Imhof, &st).unwrap())
    });
    g.bench_function("ifft_pdf_grid_100", |b| {
        let xs: Vec<f64> = (1..=100).map(|i| i as f64 * 0.5).collect();
        b.iter(|| gx2pdf(&p, black_box(&xs), Method::Ifft, &st).unwrap())
    });
    g.bench_function("inverse_auto", |b| {
        b.iter(|| {
            gx2inv(
                &p,
                black_box(Prob::Linear(0.05)),
                Side::Upper,
                Method::Auto,
                &st,
            )
            .unwrap()
        })
    });
    g.finish();
}

fn sampling(c: &mut Criterion) {
    let p = mixed();
    let mut g = c.benchmark_group("sample_1e5");
    for path in [SamplePath::Component, SamplePath::Quadratic] {
        g.bench_function(format!("{path:?}"), |b| {
            b.iter(|| sample(&p, 100_000, black_box(7), path))
        });
    }
    g.finish();
}

criterion_group!(benches, cdf_methods, tails, pdf_and_inverse, sampling);
criterion_main!(benches);
