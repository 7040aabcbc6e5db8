use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use minrec::minimizers::{minimize_gbfs, minimize_gfs, minimize_gr};
use minrec::{fit_ease, fit_itemknn, rank_top, InferenceCounter, Similarity};
use minrec_bench::BenchFixture;

fn fitting(c: &mut Criterion) {
    let fx = BenchFixture::new(600, 800);
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    group.bench_function("ease_800", |b| {
        b.iter(|| fit_ease(&fx.train, 100.0).unwrap())
    });
    group.bench_function("itemknn_800_k50", |b| {
        b.iter(|| fit_itemknn(&fx.train, 50, Similarity::Cosine).unwrap())
    });
    group.finish();
}

fn inference(c: &mut Criterion) {
    let fx = BenchFixture::new(600, 800);
    let history = fx.history(30, 30);
    let mut group = c.benchmark_group("infer_rank_top100");
    for (name, model) in [("ease", &fx.ease), ("itemknn", &fx.knn)] {
        group.bench_function(name, |b| {
            let mut counter = InferenceCounter::new();
            b.iter(|| rank_top(&model.infer(&history, &mut counter), &history, 100))
        });
    }
    group.finish();
}

fn minimizers(c: &mut Criterion) {
    let fx = BenchFixture::new(600, 800);
    let mut group = c.benchmark_group("minimize_itemknn");
    group.sample_size(10);
    for len in [10, 20, 40] {
        let history = fx.history(len, len);
        let problem = fx.problem(&fx.knn, &history, 0.98);
        group.bench_with_input(BenchmarkId::new("GR", len), &problem, |b, p| {
            b.iter(|| minimize_gr(p, &mut InferenceCounter::new()))
        });
        group.bench_with_input(BenchmarkId::new("GFS", len), &problem, |b, p| {
            b.iter(|| minimize_gfs(p, &mut InferenceCounter::new()))
        });
        group.bench_with_input(BenchmarkId::new("GBFS_L5", len), &problem, |b, p| {
            b.iter(|| minimize_gbfs(p, 5, &mut InferenceCounter::new()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, fitting, inference, minimizers);
criterion_main!(benches);
