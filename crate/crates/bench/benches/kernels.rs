use criterion::{black_box, criterion_group, criterion_main, Criterion};
use wavehom::hetwave::{discrete_eigenpairs, evolve_heterogeneous, Boundary, Operator, WaveState};
use wavehom::homprop::{green_function, HomogenizedSymbol};
use wavehom::media::{sample_periodic, sample_random, PeriodicProfile};
use wavehom::spreading::large_scale_average;
use wavehom::twoscale::build_mollifier;
use wavehom::{build_correctors, build_grid, SolverOptions};

fn laminate() -> PeriodicProfile {
    PeriodicProfile::Laminate { low: 1.0, high: 4.0 }
}

fn correctors(c: &mut Criterion) {
    let g1 = build_grid(1, 1.0, 64).unwrap();
    let f1 = sample_periodic(&laminate(), 1.0, &g1).unwrap();
    c.bench_function("correctors 1D laminate 64 pts order 4", |b| {
        b.iter(|| build_correctors(black_box(&f1), 4, SolverOptions::default()).unwrap())
    });
    let g2 = build_grid(2, 8.0, 16).unwrap();
    let f2 = sample_random(3, 2.0, &g2, 4.0).unwrap();
    c.bench_function("correctors 2D random 16x16 order 3", |b| {
        b.iter(|| build_correctors(black_box(&f2), 3, SolverOptions::default()).unwrap())
    });
}

fn operator(c: &mut Criterion) {
    let g = build_grid(2, 64.0, 256).unwrap();
    let op = Operator::new(&sample_random(5, 2.0, &g, 4.0).unwrap());
    let u = g.sample(|x| (x[0] * 0.3).sin() * (x[1] * 0.2).cos());
    let mut out = vec![0.0; g.len()];
    c.bench_function("operator apply 2D 256x256", |b| b.iter(|| op.apply_into(black_box(&u), &mut out)));
    let g = build_grid(1, 128.0, 2048).unwrap();
    let op = Operator::new(&sample_periodic(&laminate(), 1.0, &g).unwrap());
    let s = WaveState::at_rest(g, g.sample(|x| (-(x[0] - 64.0).powi(2)).exp()));
    c.bench_function("leapfrog 1D 2048 pts to t = 10", |b| {
        b.iter(|| evolve_heterogeneous(&op, black_box(&s), 10.0, op.default_dt()).unwrap())
    });
}

fn green(c: &mut Criterion) {
    let cell = build_grid(1, 1.0, 64).unwrap();
    let set = build_correctors(&sample_periodic(&laminate(), 1.0, &cell).unwrap(), 3, SolverOptions::default()).unwrap();
    let symbol = HomogenizedSymbol::from_correctors(&set, 3).unwrap();
    let g = build_grid(1, 4096.0, 8192).unwrap();
    let m = build_mollifier(0.1, &g).unwrap();
    c.bench_function("green function 1D 8192 pts", |b| b.iter(|| green_function(&symbol, &m, black_box(100.0)).unwrap()));
}

fn spreading(c: &mut Criterion) {
    let g = build_grid(1, 64.0, 256).unwrap();
    let op = Operator::new(&sample_random(7, 2.0, &g, 10.0).unwrap());
    c.bench_function("eigenpairs 1D 256 pts", |b| {
        b.iter(|| discrete_eigenpairs(&op, 4, black_box(1.0), Boundary::Periodic).unwrap())
    });
    let g = build_grid(2, 64.0, 128).unwrap();
    let u = g.sample(|x| (x[0] * 0.1).cos() + (x[1] * 0.2).sin());
    c.bench_function("large-scale average 2D 128x128", |b| b.iter(|| large_scale_average(black_box(&u), &g, 8.0)));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = correctors, operator, green, spreading
}
criterion_main!(benches);
