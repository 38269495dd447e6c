use std::hint::black_box;

use aggbounds::linprog::{solve, LinearProgram};
use aggbounds::bounds::InnerProblem;
use aggbounds::{group_bounds, inner_closed_form, inner_lp, Direction, OutcomeRange, SearchOptions};
use aggbounds_bench::{focus_weights, preset, preset_dataset, spread_joint};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn inner(c: &mut Criterion) {
    let range = OutcomeRange::new(0.0, 1.0).unwrap();
    let mut g = c.benchmark_group("inner");
    for k in [4usize, 8, 16] {
        let p = spread_joint(k);
        let lam: Vec<f64> = (0..k).map(|i| if i % 2 == 0 { 1.0 } else { -0.5 }).collect();
        g.bench_with_input(BenchmarkId::new("closed_form", k), &k, |b, _| {
            b.iter(|| inner_closed_form(black_box(&lam), black_box(&p), 0.4, range, Direction::Min))
        });
        g.bench_with_input(BenchmarkId::new("lp", k), &k, |b, _| {
            b.iter(|| inner_lp(&InnerProblem::new(black_box(&lam), black_box(&p), 0.4, range, Direction::Min)))
        });
    }
    g.finish();
}

fn transport_lp(c: &mut Criterion) {
    // balanced transport problem with n sources and n sinks
    let n = 12;
    let mut lp = LinearProgram::minimize((0..n * n).map(|i| ((i * 7) % 11) as f64).collect()).with_bounds(0.0, f64::INFINITY);
    for i in 0..n {
        let mut row = vec![0.0; n * n];
        row[i * n..(i + 1) * n].iter_mut().for_each(|v| *v = 1.0);
        lp.add_eq(row, 1.0);
        let mut col = vec![0.0; n * n];
        (0..n).for_each(|j| col[j * n + i] = 1.0);
        lp.add_eq(col, 1.0);
    }
    c.bench_function("lp/transport_12x12", |b| b.iter(|| solve(black_box(&lp)).unwrap()));
}

fn group_search(c: &mut Criterion) {
    let ds = preset_dataset(1, 1300, 7);
    let lam = focus_weights();
    let opts = SearchOptions::default();
    c.bench_function("group_bounds/preset1", |b| {
        b.iter(|| group_bounds(&ds.groups[0], &ds.support, &lam, ds.range, None, false, &opts).unwrap())
    });
}

fn simulate(c: &mut Criterion) {
    let spec = preset(1);
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    g.bench_function("preset1_n1300", |b| {
        b.iter(|| aggbounds::simlab::simulate_aggregate(&spec, 1300, black_box(3), false).unwrap())
    });
    g.finish();
}

criterion_group!(benches, inner, transport_lp, group_search, simulate);
criterion_main!(benches);
