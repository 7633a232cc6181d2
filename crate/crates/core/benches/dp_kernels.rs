use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use hjlab::dp::{min_plus_step, Kernel};
use hjlab::par::Exec;
use hjlab::problem::catalog;
use hjlab::solvers::{solve_cauchy_ms, Method, Resolution};

fn min_plus(c: &mut Criterion) {
    let mut group = c.benchmark_group("min_plus_step");
    for &n in &[1usize << 14, 1 << 17] {
        let h = 1.0 / 512.0;
        let prev: Vec<f64> = (0..n).map(|i| ((i as f64) * h).sin()).collect();
        let post: Vec<f64> = (0..n).map(|i| 0.01 * ((i as f64) * h * 7.0).cos()).collect();
        let kern = Kernel::from_fn(16, |j| 0.5 * (j as f64 * h).powi(2) / h);
        let mut out = vec![0.0; n];
        for exec in [Exec::Sequential, Exec::Parallel] {
            group.bench_with_input(BenchmarkId::new(format!("{exec:?}"), n), &n, |b, _| {
                b.iter(|| min_plus_step(exec, black_box(&prev), &post, &kern, 0, n, &mut out))
            });
        }
    }
    group.finish();
}

fn cauchy_solve(c: &mut Criterion) {
    let spec = catalog("prop43_cauchy").unwrap();
    let mut group = c.benchmark_group("solve_cauchy_ms");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        let mut cfg = Resolution::default().cauchy(&spec, 0.05, 1.0);
        cfg.exec = exec;
        group.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| solve_cauchy_ms(&spec, 0.05, 1.0, &cfg, Method::LaxOleinikDp).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, min_plus, cauchy_solve);
criterion_main!(benches);
