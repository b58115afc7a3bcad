use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use curate_bench::{points, survival, table};
use curate_core::dataset::dataset_fingerprint;
use curate_core::models::{auroc, cindex, cox};
use curate_core::tools::shapley::knn_shapley;
use std::hint::black_box;

fn shapley(c: &mut Criterion) {
    let mut g = c.benchmark_group("knn_shapley");
    for n in [200, 1000] {
        let train = points(n, 8, 1);
        let val = points(100, 8, 2);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| knn_shapley(black_box(&train.x), &train.y, &val.x, &val.y, 5).unwrap())
        });
    }
    g.finish();
}

fn metrics(c: &mut Criterion) {
    let (times, events, risk) = survival(5000, 3);
    c.bench_function("cindex_5000", |b| b.iter(|| cindex(black_box(&times), &events, &risk).unwrap()));
    let labels: Vec<bool> = times.iter().map(|t| *t < 50.0).collect();
    c.bench_function("auroc_5000", |b| b.iter(|| auroc(black_box(&risk), &labels).unwrap()));
    let x: Vec<Vec<f64>> = points(2000, 6, 4).x;
    let (times, events, _) = survival(2000, 5);
    let beta = vec![0.1; 6];
    c.bench_function("cox_gradient_2000", |b| b.iter(|| cox::gradient(black_box(&x), &times, &events, &beta)));
}

fn fingerprint(c: &mut Criterion) {
    let ds = table(2000, 20);
    c.bench_function("fingerprint_2000x24", |b| b.iter(|| dataset_fingerprint(black_box(&ds))));
}

criterion_group!(benches, shapley, metrics, fingerprint);
criterion_main!(benches);
